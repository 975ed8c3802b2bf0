fn main() {
    std::process::exit(osodd::cli::run_cli(std::env::args_os()));
}
