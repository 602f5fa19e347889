fn main() {
    std::process::exit(lde_cli::run(std::env::args()));
}
