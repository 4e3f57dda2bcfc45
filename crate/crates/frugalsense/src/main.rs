fn main() -> std::process::ExitCode {
    frugalsense::cli::main_entry()
}
