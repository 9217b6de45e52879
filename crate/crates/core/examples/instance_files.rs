//! Writing, reading and validating instance files.

use catmin::io::{fixtures, parse_instance, validate, InstanceFile};
use catmin::mesh::builders::grid;

fn main() {
    let mut inst = InstanceFile::mapped_disc(grid(3, 3));
    inst.sample = Some(vec![0, 2, 8]);
    inst.tolerances.zero = Some(1e-8);
    let text = inst.to_json();
    println!("{} bytes, first lines:", text.len());
    for line in text.lines().take(6) {
        println!("  {line}");
    }
    let back = parse_instance(&text).unwrap();
    println!("round trip equal: {}", back == inst);

    let broken = text.replacen("\"zero\": 1e-8", "\"zero\": -1.0", 1).replacen("8\n", "80\n", 1);
    match parse_instance(&broken) {
        Ok(i) => {
            for d in validate(&i) {
                println!("  {d}");
            }
        }
        Err(ds) => ds.iter().for_each(|d| println!("  {d}")),
    }
    match parse_instance("{\"version\": 1,\n \"payload\": }") {
        Ok(_) => unreachable!(),
        Err(ds) => println!("syntax: {}", ds[0]),
    }

    for (name, f) in fixtures::all() {
        println!("{name:<20} {}", f.payload.kind());
    }
}
