fn main() {
    std::process::exit(passive_admittance::cli::run_cli(std::env::args_os()));
}
