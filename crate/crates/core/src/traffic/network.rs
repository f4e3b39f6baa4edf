use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IqvipError, Result};

/// Node identifier as written in a network file: a number or a name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeId {
    Num(i64),
    Name(String),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Num(n) => write!(f, "{n}"),
            NodeId::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub tail: NodeId,
    pub head: NodeId,
    /// Free-flow travel time.
    pub t0: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdSpec {
    pub o: NodeId,
    pub d: NodeId,
    pub demand: f64,
}

/// A tolled link with its flow corridor `[lo + x, hi + x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledSpec {
    /// Zero-based position in `links`.
    pub link: usize,
    pub lo: f64,
    pub hi: f64,
}

/// On-disk network document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkSpec>,
    pub od: Vec<OdSpec>,
    #[serde(default)]
    pub controlled: Vec<ControlledSpec>,
    /// Time units per unit of toll; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_of_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub tail: usize,
    pub head: usize,
    pub free_flow_time: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlledLink {
    pub link: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Directed road network with BPR link parameters, fixed OD demands and a
/// set of tolled links.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficNetwork {
    node_ids: Vec<NodeId>,
    pub(crate) out_links: Vec<Vec<usize>>,
    pub links: Vec<Link>,
    pub od_pairs: Vec<OdPair>,
    pub controlled: Vec<ControlledLink>,
    pub value_of_time: f64,
}

impl TrafficNetwork {
    pub fn from_file_spec(spec: &NetworkFile) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, id) in spec.nodes.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(IqvipError::Network(format!("duplicate node {id}")));
            }
        }
        let lookup = |id: &NodeId, what: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| IqvipError::Network(format!("{what} refers to unknown node {id}")))
        };
        let mut links = Vec::with_capacity(spec.links.len());
        for (k, l) in spec.links.iter().enumerate() {
            let link = Link {
                tail: lookup(&l.tail, &format!("links[{k}].tail"))?,
                head: lookup(&l.head, &format!("links[{k}].head"))?,
                free_flow_time: l.t0,
                capacity: l.cap,
            };
            if !(link.free_flow_time > 0.0) || !link.free_flow_time.is_finite() {
                return Err(IqvipError::Network(format!("links[{k}].t0 must be positive")));
            }
            if !(link.capacity > 0.0) || !link.capacity.is_finite() {
                return Err(IqvipError::Network(format!("links[{k}].cap must be positive")));
            }
            links.push(link);
        }
        let mut od_pairs = Vec::with_capacity(spec.od.len());
        for (k, od) in spec.od.iter().enumerate() {
            let pair = OdPair {
                origin: lookup(&od.o, &format!("od[{k}].o"))?,
                destination: lookup(&od.d, &format!("od[{k}].d"))?,
                demand: od.demand,
            };
            if !(pair.demand >= 0.0) || !pair.demand.is_finite() {
                return Err(IqvipError::Network(format!("od[{k}].demand must be nonnegative")));
            }
            od_pairs.push(pair);
        }
        let mut controlled = Vec::with_capacity(spec.controlled.len());
        for (k, c) in spec.controlled.iter().enumerate() {
            if c.link >= links.len() {
                return Err(IqvipError::Network(format!(
                    "controlled[{k}].link = {} is out of range",
                    c.link
                )));
            }
            if controlled.iter().any(|e: &ControlledLink| e.link == c.link) {
                return Err(IqvipError::Network(format!("controlled[{k}] repeats link {}", c.link)));
            }
            if !(c.lo <= c.hi) || !c.lo.is_finite() || !c.hi.is_finite() {
                return Err(IqvipError::Network(format!("controlled[{k}] needs lo <= hi")));
            }
            controlled.push(ControlledLink { link: c.link, lo: c.lo, hi: c.hi });
        }
        let value_of_time = spec.value_of_time.unwrap_or(1.0);
        if !(value_of_time > 0.0) || !value_of_time.is_finite() {
            return Err(IqvipError::Network("value_of_time must be positive".into()));
        }
        let mut out_links = vec![Vec::new(); spec.nodes.len()];
        for (k, l) in links.iter().enumerate() {
            out_links[l.tail].push(k);
        }
        let net = Self {
            node_ids: spec.nodes.clone(),
            out_links,
            links,
            od_pairs,
            controlled,
            value_of_time,
        };
        net.check_connectivity()?;
        Ok(net)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_spec(&serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_spec(&self) -> NetworkFile {
        NetworkFile {
            name: None,
            comment: None,
            nodes: self.node_ids.clone(),
            links: self
                .links
                .iter()
                .map(|l| LinkSpec {
                    tail: self.node_ids[l.tail].clone(),
                    head: self.node_ids[l.head].clone(),
                    t0: l.free_flow_time,
                    cap: l.capacity,
                })
                .collect(),
            od: self
                .od_pairs
                .iter()
                .map(|od| OdSpec {
                    o: self.node_ids[od.origin].clone(),
                    d: self.node_ids[od.destination].clone(),
                    demand: od.demand,
                })
                .collect(),
            controlled: self
                .controlled
                .iter()
                .map(|c| ControlledSpec { link: c.link, lo: c.lo, hi: c.hi })
                .collect(),
            value_of_time: Some(self.value_of_time),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_id(&self, index: usize) -> &NodeId {
        &self.node_ids[index]
    }

    pub fn controlled_count(&self) -> usize {
        self.controlled.len()
    }

    /// Same network with every demand multiplied by `factor`.
    pub fn with_scaled_demand(&self, factor: f64) -> Self {
        let mut net = self.clone();
        for od in &mut net.od_pairs {
            od.demand *= factor;
        }
        net
    }

    fn check_connectivity(&self) -> Result<()> {
        for od in &self.od_pairs {
            let mut seen = vec![false; self.node_count()];
            let mut stack = vec![od.origin];
            seen[od.origin] = true;
            while let Some(u) = stack.pop() {
                for &k in &self.out_links[u] {
                    let v = self.links[k].head;
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            if !seen[od.destination] {
                return Err(IqvipError::Unreachable {
                    origin: self.node_ids[od.origin].to_string(),
                    destination: self.node_ids[od.destination].to_string(),
                });
            }
        }
        Ok(())
    }
}
