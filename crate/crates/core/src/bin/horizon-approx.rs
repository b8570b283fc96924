fn main() {
    std::process::exit(horizon_approx::cli::run(std::env::args_os()));
}
