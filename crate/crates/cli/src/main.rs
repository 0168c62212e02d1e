fn main() {
    std::process::exit(stgraph_cli::run_cli(std::env::args_os()));
}
