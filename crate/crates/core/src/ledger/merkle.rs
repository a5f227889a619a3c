use super::digest::Digest;

/// Binary Merkle root over `leaves`. An odd node at any level is paired
/// with itself, so a single leaf `h` yields `SHA-256(h || h)`. The empty
/// list maps to `SHA-256("")`.
pub fn payload_root(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return Digest::of(&[]);
    }
    let mut level: Vec<Digest> = leaves.to_vec();
    loop {
        if level.len() % 2 == 1 {
            let last = *level.last().expect("non-empty");
            level.push(last);
        }
        level = level
            .chunks_exact(2)
            .map(|pair| Digest::of_parts(&[pair[0].as_bytes(), pair[1].as_bytes()]))
            .collect();
        if level.len() == 1 {
            return level[0];
        }
    }
}
