fn main() -> std::process::ExitCode {
    skyways::cli::main()
}
