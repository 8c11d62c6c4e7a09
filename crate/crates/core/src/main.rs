fn main() {
    std::process::exit(kinkpanel::cli::run(std::env::args_os()));
}
