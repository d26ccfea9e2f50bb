fn main() {
    std::process::exit(horizon_audit::cli::main());
}
