fn main() {
    std::process::exit(basis_mpc::cli::run(std::env::args_os()));
}
