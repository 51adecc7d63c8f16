fn main() {
    std::process::exit(hmbitcn::cli::run(std::env::args_os()));
}
