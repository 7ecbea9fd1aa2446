fn main() {
    std::process::exit(maskflow::cli::run(std::env::args_os()));
}
