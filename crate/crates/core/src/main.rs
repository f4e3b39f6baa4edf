fn main() {
    std::process::exit(iqvip::cli::main_with_args(std::env::args_os()));
}
