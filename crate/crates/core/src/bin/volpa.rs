fn main() {
    std::process::exit(volpa::cli::run(std::env::args_os()));
}
