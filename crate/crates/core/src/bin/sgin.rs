fn main() {
    std::process::exit(sgin_core::cli::run(std::env::args_os()));
}
