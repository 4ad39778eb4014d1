fn main() -> std::process::ExitCode {
    riskbn::cli::main()
}
