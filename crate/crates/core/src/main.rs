fn main() {
    env_logger::init();
    std::process::exit(sparse_fem::cli::run(std::env::args_os()));
}
