use std::process::ExitCode;

fn main() -> ExitCode {
    phyplan::cli::main()
}
