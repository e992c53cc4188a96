fn main() -> std::process::ExitCode {
    rpnet::cli::main()
}
