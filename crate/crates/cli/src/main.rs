fn main() {
    println!("printforge");
}
