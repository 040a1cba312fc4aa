//! Fusion of FD sequences into maximal parameter chains.

use crate::model::AttributeName;

use super::HierarchyError;

/// Repeatedly fuses two sequences of equal length when the tail of one (all
/// but its first element) equals the head of the other (all but its last).
/// Sequences that take part in no fusion during a round carry over. Stops
/// when a round fuses nothing.
///
/// On an acyclic input the result is the set of maximal chains: every path
/// from a parameter nothing depends on to one that depends on nothing.
pub fn merge_parameters(fds: &[Vec<AttributeName>]) -> Result<Vec<Vec<AttributeName>>, HierarchyError> {
    for s in fds {
        if s.len() < 2 {
            return Err(HierarchyError::ShortFdSequence(s.iter().map(|p| p.raw().to_string()).collect()));
        }
    }
    check_acyclic(fds)?;

    let mut current = dedup(fds.to_vec());
    loop {
        let mut fused = Vec::new();
        let mut used = vec![false; current.len()];
        for i in 0..current.len() {
            for j in (i + 1)..current.len() {
                let (a, b) = (&current[i], &current[j]);
                if a.len() != b.len() {
                    continue;
                }
                let l = a.len();
                if a[1..] == b[..l - 1] {
                    fused.push(join(a, &b[l - 1]));
                    used[i] = true;
                    used[j] = true;
                }
                if a[..l - 1] == b[1..] {
                    fused.push(join(b, &a[l - 1]));
                    used[i] = true;
                    used[j] = true;
                }
            }
        }
        if fused.is_empty() {
            return Ok(current);
        }
        fused.extend(current.iter().zip(&used).filter(|(_, u)| !**u).map(|(s, _)| s.clone()));
        current = dedup(fused);
    }
}

fn join(seq: &[AttributeName], tail: &AttributeName) -> Vec<AttributeName> {
    let mut out = seq.to_vec();
    out.push(tail.clone());
    out
}

fn dedup(seqs: Vec<Vec<AttributeName>>) -> Vec<Vec<AttributeName>> {
    let mut out: Vec<Vec<AttributeName>> = Vec::with_capacity(seqs.len());
    for s in seqs {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn check_acyclic(fds: &[Vec<AttributeName>]) -> Result<(), HierarchyError> {
    let mut nodes: Vec<&AttributeName> = Vec::new();
    for p in fds.iter().flatten() {
        if !nodes.contains(&p) {
            nodes.push(p);
        }
    }
    let n = nodes.len();
    let idx = |p: &AttributeName| nodes.iter().position(|q| *q == p).expect("collected above");
    let mut adj = vec![vec![false; n]; n];
    for s in fds {
        for w in s.windows(2) {
            adj[idx(&w[0])][idx(&w[1])] = true;
        }
    }
    let reach = super::fd::reachability(&adj);
    match (0..n).find(|&i| reach[i][i]) {
        Some(i) => Err(HierarchyError::CyclicFds(nodes[i].raw().to_string())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::names;

    fn seqs(raw: &[&[&str]]) -> Vec<Vec<AttributeName>> {
        raw.iter().map(|s| names(s)).collect()
    }

    fn sorted(mut v: Vec<Vec<AttributeName>>) -> Vec<Vec<String>> {
        v.sort();
        v.into_iter().map(|s| s.iter().map(|p| p.raw().to_string()).collect()).collect()
    }

    #[test]
    fn fig3_example() {
        let fd = seqs(&[&["A", "B"], &["B", "C"], &["B", "F"], &["C", "E"], &["D", "B"]]);
        let out = merge_parameters(&fd).unwrap();
        assert_eq!(
            sorted(out),
            sorted(seqs(&[&["A", "B", "C", "E"], &["D", "B", "C", "E"], &["A", "B", "F"], &["D", "B", "F"]]))
        );
    }

    #[test]
    fn single_edge_is_kept() {
        let fd = seqs(&[&["A", "B"]]);
        assert_eq!(merge_parameters(&fd).unwrap(), fd);
    }

    #[test]
    fn unequal_lengths_never_fuse() {
        let fd = seqs(&[&["A", "B", "C"], &["C", "D"]]);
        assert_eq!(sorted(merge_parameters(&fd).unwrap()), sorted(fd));
    }

    #[test]
    fn cycles_are_rejected() {
        let fd = seqs(&[&["A", "B"], &["B", "A"]]);
        assert!(matches!(merge_parameters(&fd), Err(HierarchyError::CyclicFds(_))));
    }

    #[test]
    fn short_sequences_are_rejected() {
        let fd = seqs(&[&["A"]]);
        assert!(matches!(merge_parameters(&fd), Err(HierarchyError::ShortFdSequence(_))));
    }
}
