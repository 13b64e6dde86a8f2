fn main() {
    std::process::exit(fibergcn::cli::run_cli(std::env::args_os().skip(1)));
}
