fn main() {
    std::process::exit(quadopt_cli::main_with_args(std::env::args().collect()));
}
