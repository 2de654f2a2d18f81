fn main() -> std::process::ExitCode {
    voxplan::cli::main()
}
