fn main() { println!("stegapos"); }
