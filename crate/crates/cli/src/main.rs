fn main() {
    std::process::exit(belm_lab::run(std::env::args_os()));
}
