fn main() {
    let code = scip::cli::main_with(std::env::args_os(), std::env::var(scip::cli::SEED_ENV).ok());
    std::process::exit(code);
}
