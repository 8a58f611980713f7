fn main() -> std::process::ExitCode {
    double_irs::cli::main()
}
