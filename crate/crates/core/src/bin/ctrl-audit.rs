fn main() {
    std::process::exit(ctrl_audit::cli::run(std::env::args_os()));
}
