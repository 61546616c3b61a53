fn main() {
    std::process::exit(optocool_cli::run(std::env::args_os()));
}
