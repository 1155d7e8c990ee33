fn main() {
    std::process::exit(ldp_sgd_cli::run_from_env());
}
