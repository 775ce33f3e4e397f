use super::*;
use proptest::prelude::*;

fn spec(kind: TaskKind) -> TaskSpec {
    TaskSpec::new(kind, 42)
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn copy_and_reverse_targets() {
    let copy = TaskRules::for_spec(&spec(TaskKind::Copy));
    assert_eq!(copy.target(&[3, 5, 7]), vec![3, 5, 7, EOS]);
    let rev = TaskRules::for_spec(&spec(TaskKind::Reverse));
    assert_eq!(rev.target(&[3, 5, 7]), vec![7, 5, 3, EOS]);

    let corpora = generate(&spec(TaskKind::Reverse)).unwrap();
    for p in &corpora.train {
        let mut r = p.source().to_vec();
        r.reverse();
        assert_eq!(p.target_tokens(), &r[..]);
    }
}

#[test]
fn chain_targets_match_independent_reimplementation() {
    let s = TaskSpec {
        train: 800,
        dev: 100,
        test: 100,
        ..spec(TaskKind::Chain)
    };
    let corpora = generate(&s).unwrap();
    let perm = TaskRules::for_spec(&s).chain.permutation().to_vec();
    let n = s.vocab_size - 3;
    let mut checked = 0;
    for p in corpora.train.iter().chain(&corpora.dev).chain(&corpora.test) {
        let mut want = Vec::new();
        let mut prev_offset = 0usize;
        for &tok in p.source() {
            let next = perm[(prev_offset + (tok - 3)) % n];
            want.push(next + 3);
            prev_offset = next;
        }
        assert_eq!(p.target_tokens(), &want[..]);
        checked += 1;
    }
    assert_eq!(checked, 1000);
}

#[test]
fn chain_flip_changes_every_later_token() {
    let rules = TaskRules::for_spec(&spec(TaskKind::Chain));
    let corpora = generate(&spec(TaskKind::Chain)).unwrap();
    let n = 17;
    let (mut changed, mut total) = (0usize, 0usize);
    for p in &corpora.train {
        let target = p.target_tokens();
        for j in 0..target.len() - 1 {
            let flipped = 3 + (target[j] - 3 + 1) % n;
            let mut prev = Some(flipped);
            for (i, &s) in p.source().iter().enumerate().skip(j + 1) {
                let t = rules.chain.apply(prev, s);
                total += 1;
                if t != target[i] {
                    changed += 1;
                }
                prev = Some(t);
            }
        }
    }
    let rate = changed as f64 / total as f64;
    assert!(rate >= 1.0 - 1.0 / 20.0, "suffix change rate {rate}");
}

#[test]
fn tagger_emits_valid_bio_from_token_and_left_neighbour() {
    let corpora = generate(&spec(TaskKind::Tagger)).unwrap();
    let rules = TaskRules::for_spec(&spec(TaskKind::Tagger));
    assert_eq!(corpora.vocab.len(), 20 + TAGS.len());
    for p in &corpora.train {
        let tags = corpora.vocab.decode(p.target());
        assert_eq!(tags.len(), p.source().len());
        for (i, tag) in tags.iter().enumerate() {
            assert!(TAGS.contains(&tag.as_str()));
            if let Some(ty) = tag.strip_prefix("I-") {
                let prev = &tags[i - 1];
                assert!(prev == &format!("B-{ty}") || prev == &format!("I-{ty}"));
            }
            assert_eq!(rules.tagger.tag(p.source(), i) + rules.tag_base, p.target()[i]);
        }
    }
}

#[test]
fn generation_is_pure_and_splits_are_disjoint() {
    for kind in [TaskKind::Copy, TaskKind::Reverse, TaskKind::Chain, TaskKind::Tagger] {
        let a = generate(&spec(kind)).unwrap();
        let b = generate(&spec(kind)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (500, 100, 100));
        let mut seen = HashSet::new();
        for p in a.train.iter().chain(&a.dev).chain(&a.test) {
            assert!(seen.insert(p.source().to_vec()));
            assert!((4..=8).contains(&p.source().len()));
            assert_eq!(p.target().last(), Some(&EOS));
        }
        let c = generate(&TaskSpec { seed: 43, ..spec(kind) }).unwrap();
        assert_ne!(a.train, c.train);
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let base = spec(TaskKind::Copy);
    assert!(generate(&TaskSpec { vocab_size: 3, ..base }).is_err());
    assert!(generate(&TaskSpec { min_len: 0, ..base }).is_err());
    assert!(generate(&TaskSpec { min_len: 9, ..base }).is_err());
    assert!(generate(&TaskSpec { train: 0, ..base }).is_err());
    let tiny = TaskSpec {
        vocab_size: 4,
        min_len: 1,
        max_len: 2,
        ..base
    };
    assert!(generate(&tiny).is_err());
    assert!("nope".parse::<TaskKind>().is_err());
}

#[test]
fn vocabulary_from_single_pair() {
    let pairs = vec![TextPair {
        source: words("a b"),
        target: words("c"),
    }];
    let v = build_vocab(&[&pairs]);
    assert_eq!(v.len(), 6);
    assert_eq!(v.tokens(), &words("<s> </s> <unk> a b c")[..]);
    for id in 0..v.len() {
        assert_eq!(v.id(v.token(id).unwrap()), id);
    }
    assert_eq!(v.id("zzz"), UNK);
    let p = v.encode_pair(&pairs[0]).unwrap();
    assert_eq!(p.source(), &[3, 4]);
    assert_eq!(p.target(), &[5, EOS]);
    assert_eq!(v.decode_pair(&p), pairs[0]);
}

#[test]
fn sequence_pair_invariants() {
    assert!(SequencePair::new(vec![], vec![EOS]).is_err());
    assert!(SequencePair::new(vec![3], vec![3]).is_err());
    assert!(SequencePair::new(vec![3], vec![EOS, 3, EOS]).is_err());
    assert!(SequencePair::new(vec![3], vec![EOS]).is_ok());
}

#[test]
fn corpus_errors_and_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    assert!(read_corpus(&empty).unwrap().is_empty());

    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "a b\tc\nno tab here\n").unwrap();
    match read_corpus(&bad) {
        Err(Error::Parse { line, path, .. }) => {
            assert_eq!(line, 2);
            assert_eq!(path, bad);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(read_corpus(&dir.path().join("missing.tsv")).is_err());
}

#[test]
fn task_dir_round_trip() {
    let corpora = generate(&spec(TaskKind::Tagger)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_task_dir(dir.path(), &corpora).unwrap();
    for f in ["train.tsv", "dev.tsv", "test.tsv", "vocab.txt"] {
        assert!(dir.path().join(f).exists());
    }
    let back = read_task_dir(dir.path()).unwrap();
    assert_eq!(back, corpora);
    let vocab_text = fs::read_to_string(dir.path().join("vocab.txt")).unwrap();
    assert_eq!(vocab_text.lines().nth(1), Some(EOS_TOKEN));
}

fn token() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9äöüß\\-]{1,6}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn corpus_write_read_round_trip(pairs in proptest::collection::vec(
        (proptest::collection::vec(token(), 1..6), proptest::collection::vec(token(), 1..6)),
        0..100,
    )) {
        let pairs: Vec<TextPair> = pairs
            .into_iter()
            .map(|(source, target)| TextPair { source, target })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        write_corpus(&path, &pairs).unwrap();
        prop_assert_eq!(read_corpus(&path).unwrap(), pairs);
    }
}
