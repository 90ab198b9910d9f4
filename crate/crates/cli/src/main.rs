fn main() {
    std::process::exit(patchcast::cli::run(std::env::args_os()));
}
