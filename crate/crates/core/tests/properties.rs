use codesum_core::corpus::{
    build_vocabulary, encode_and_pad, pad_ids, tokenize_code, RawPair, Side, TokenSequence, Vocabulary, BOS, EOS,
};
use codesum_core::metrics::{bleu4, brevity_penalty, lcs_length, meteor_default, rouge_l};
use codesum_core::numcore::{Tape, Tensor};
use codesum_core::segmenter::{segment, Language};
use proptest::prelude::*;

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["get", "set", "name", "value", "list", "size", "the", "of"]), 1..12)
        .prop_map(|v| v.into_iter().map(str::to_owned).collect())
}

fn java_text() -> impl Strategy<Value = String> {
    prop::string::string_regex("[a-z =;{}()\"\n]{1,80}").unwrap()
}

fn code_text() -> impl Strategy<Value = String> {
    prop::string::string_regex("[a-zA-Z0-9_ (){};.=+\"\n]{0,60}").unwrap()
}

fn small_seq() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..6, 1..16)
}

proptest! {
    #[test]
    fn code_tokens_are_clean(text in code_text()) {
        for t in tokenize_code(&text).tokens() {
            prop_assert!(!t.is_empty());
            prop_assert!(!t.chars().any(char::is_whitespace));
            prop_assert_eq!(t.to_lowercase(), t.clone());
        }
    }

    #[test]
    fn vocabulary_round_trip(comments in prop::collection::vec(words(), 1..6), max_len in 3usize..20) {
        let pairs: Vec<RawPair> = comments
            .iter()
            .enumerate()
            .map(|(i, c)| RawPair { id: i, code: c.join(" "), comment: c.join(" ") })
            .collect();
        let vocab = build_vocabulary(&pairs, 1, 100).unwrap();
        prop_assert_eq!(&build_vocabulary(&pairs, 1, 100).unwrap(), &vocab);
        let seqs: Vec<TokenSequence> = comments.iter().map(|c| TokenSequence::new(c.clone())).collect();
        let batch = encode_and_pad(&seqs, &vocab, Side::Comment, max_len);
        for (r, seq) in seqs.iter().enumerate() {
            let row = batch.row(r);
            prop_assert!(row.iter().all(|&id| id < vocab.len()));
            let mask_sum: usize = batch.mask_row(r).iter().map(|&m| m as usize).sum();
            prop_assert_eq!(mask_sum, batch.lengths[r]);
            prop_assert_eq!(row[0], BOS);
            prop_assert_eq!(row[batch.lengths[r] - 1], EOS);
            if seq.len() + 2 <= max_len {
                prop_assert_eq!(&vocab.decode(row), seq);
            }
        }
    }

    #[test]
    fn code_batches_end_in_eos(seqs in prop::collection::vec(prop::collection::vec(4usize..9, 0..10), 1..5), max_len in 1usize..12) {
        let batch = pad_ids(&seqs, Side::Code, max_len);
        for r in 0..seqs.len() {
            let len = batch.lengths[r];
            prop_assert!(len <= max_len);
            prop_assert_eq!(batch.row(r)[len - 1], EOS);
            prop_assert!(batch.mask_row(r)[..len].iter().all(|&m| m == 1));
            prop_assert!(batch.mask_row(r)[len..].iter().all(|&m| m == 0));
        }
    }

    #[test]
    fn java_statement_count_bounded(code in java_text()) {
        let lines = code.lines().count().max(1);
        let count = |c: char| code.chars().filter(|&x| x == c).count();
        if let Ok(s) = segment(&code, Language::Java) {
            let semis = count(';');
            let braces = count('{') + count('}');
            prop_assert!(s.len() <= lines + semis + braces);
            if braces == 0 {
                prop_assert!(s.len() <= lines + semis);
            }
            prop_assert_eq!(segment(&code, Language::Java).unwrap(), s);
        }
    }

    #[test]
    fn generic_segmentation_is_idempotent(code in "[a-z ;\n]{1,80}") {
        if let Ok(s) = segment(&code, Language::Generic) {
            let joined: Vec<&str> = s.statements.iter().map(|st| st.text.as_str()).collect();
            prop_assert_eq!(segment(&joined.join("\n"), Language::Generic).unwrap().len(), s.len());
        }
    }

    #[test]
    fn metric_ranges_and_symmetry(r in small_seq(), g in small_seq()) {
        let l = lcs_length(&r, &g);
        prop_assert_eq!(l, lcs_length(&g, &r));
        prop_assert!(l <= r.len().min(g.len()));
        for v in [bleu4(&r, &g).unwrap(), meteor_default(&r, &g).unwrap(), rouge_l(&r, &g, 1.2).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(rouge_l(&r, &g, 1.2).unwrap() == 0.0, l == 0);
        if g.len() > r.len() {
            prop_assert_eq!(brevity_penalty(r.len(), g.len()), 1.0);
        }
    }

    #[test]
    fn identical_sentences_score_one(r in small_seq()) {
        prop_assert_eq!(rouge_l(&r, &r, 1.2).unwrap(), 1.0);
        if r.len() >= 4 {
            prop_assert!((bleu4(&r, &r).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(row in prop::collection::vec(-20.0f64..20.0, 1..8), shift in -50.0f64..50.0) {
        let run = |v: Vec<f64>| {
            let mut tape = Tape::<f64>::inference();
            let x = tape.constant(Tensor::row(v));
            let y = tape.softmax(x);
            tape.value(y).data().to_vec()
        };
        let p = run(row.clone());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        let q = run(row.iter().map(|v| v + shift).collect());
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn vocabulary_text_round_trip() {
    let v = Vocabulary::from_tokens(vec!["x".into(), "y".into()]).unwrap();
    assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
}
