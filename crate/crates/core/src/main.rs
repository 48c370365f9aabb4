fn main() -> std::process::ExitCode {
    hofforge::cli::main()
}
