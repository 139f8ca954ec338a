fn main() -> std::process::ExitCode {
    leanet::cli::main()
}
