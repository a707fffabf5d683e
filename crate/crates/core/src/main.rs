fn main() -> std::process::ExitCode {
    kg_audit::cli::main()
}
