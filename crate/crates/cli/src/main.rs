fn main() {
    std::process::exit(laplace_ode_cli::run_cli(std::env::args_os()));
}
