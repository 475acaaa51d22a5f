fn main() -> std::process::ExitCode {
    cpmd::cli::main()
}
