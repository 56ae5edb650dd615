fn main() {
    std::process::exit(diffusion_cli::run(std::env::args_os()));
}
