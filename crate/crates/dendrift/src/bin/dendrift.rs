fn main() {
    println!("dendrift");
}
