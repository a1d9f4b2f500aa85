fn main() {
    std::process::exit(clicktionary::run(std::env::args_os()));
}
