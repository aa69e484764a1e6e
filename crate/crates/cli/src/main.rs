fn main() {
    std::process::exit(spinpol_cli::run(std::env::args_os()));
}
