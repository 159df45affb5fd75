fn main() {
    std::process::exit(p2pfl::harness::cli::run_from_args(std::env::args_os()));
}
