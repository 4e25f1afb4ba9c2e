use facekit_core::Prng;

fn golden() -> (Vec<u64>, Vec<f64>) {
    let text = include_str!("data/prng_seed42.txt");
    let (mut ints, mut floats) = (Vec::new(), Vec::new());
    for line in text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
    {
        let (kind, v) = line.split_once(' ').unwrap();
        match kind {
            "u64" => ints.push(v.parse().unwrap()),
            "f64" => floats.push(v.parse().unwrap()),
            other => panic!("unknown row kind {other}"),
        }
    }
    (ints, floats)
}

#[test]
fn seed_42_stream_matches_reference() {
    let (ints, floats) = golden();
    assert_eq!((ints.len(), floats.len()), (16, 8));
    let mut rng = Prng::new(42);
    for (k, want) in ints.iter().enumerate() {
        assert_eq!(rng.next_u64(), *want, "u64 #{k}");
    }
    for (k, want) in floats.iter().enumerate() {
        assert_eq!(rng.next_f64().to_bits(), want.to_bits(), "f64 #{k}");
    }
}

#[test]
fn streams_are_independent_of_draw_history() {
    let a: Vec<u64> = {
        let mut r = Prng::split(7, 3);
        (0..4).map(|_| r.next_u64()).collect()
    };
    let mut other = Prng::split(7, 2);
    for _ in 0..100 {
        other.next_u64();
    }
    let mut r = Prng::split(7, 3);
    assert_eq!(a, (0..4).map(|_| r.next_u64()).collect::<Vec<_>>());
    assert_ne!(a[0], Prng::split(7, 2).next_u64());
}
