fn main() {
    std::process::exit(sface_core::cli::run(std::env::args_os()));
}
