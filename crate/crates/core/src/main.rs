fn main() -> std::process::ExitCode {
    tokpress::cli::main()
}
