fn main() {
    std::process::exit(lifetime_twin_cli::run(std::env::args_os()));
}
