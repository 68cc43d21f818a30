fn main() {
    std::process::exit(textscale::cli::run(std::env::args_os()));
}
