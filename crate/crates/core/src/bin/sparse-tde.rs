fn main() -> std::process::ExitCode {
    sparse_tde::cli::main()
}
