fn main() {
    eprintln!("d2t: not yet wired up");
    std::process::exit(2);
}
