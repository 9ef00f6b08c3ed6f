fn main() -> std::process::ExitCode {
    fqreg::cli::run()
}
