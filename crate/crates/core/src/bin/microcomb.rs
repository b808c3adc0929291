fn main() {
    std::process::exit(microcomb::cli::run(std::env::args_os()));
}
