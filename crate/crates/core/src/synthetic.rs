//! Deterministic synthetic test collection with parallel English and
//! pseudo-Chinese versions.
//!
//! Each topic owns a few rare "topic words". Relevant documents are long and
//! mention the topic words sparingly inside one or two sentences; distractor
//! documents are short and repeat the topic words, so BM25 tends to rank them
//! above the relevant ones. Every relevant document shares at least one term
//! with its topic, so all of them are reachable as BM25 candidates.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Qrels, Topic};

pub const DEFAULT_SEED: u64 = 20_191_210;

#[derive(Clone, Copy, Debug)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub num_topics: usize,
    pub relevant_per_topic: usize,
    pub distractors_per_topic: usize,
    pub background_docs: usize,
}

impl Default for SyntheticSpec {
    /// 10 topics, 200 documents.
    fn default() -> Self {
        SyntheticSpec {
            seed: DEFAULT_SEED,
            num_topics: 10,
            relevant_per_topic: 4,
            distractors_per_topic: 6,
            background_docs: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCollection {
    /// English documents.
    pub corpus_en: Vec<Document>,
    /// The same documents, word-for-word mapped into CJK characters.
    pub corpus_zh: Vec<Document>,
    pub topics: Vec<Topic>,
    pub qrels: Qrels,
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "su", "ra", "to", "vi", "de", "po", "ju", "fa", "ze", "bo", "ki", "wu",
];

type Judgments = Vec<(usize, u32)>;

fn en_word(id: usize) -> String {
    let a = SYLLABLES[id % 16];
    let b = SYLLABLES[(id / 16) % 16];
    let c = SYLLABLES[(id / 256) % 16];
    format!("{a}{b}{c}")
}

/// Two CJK ideographs per word; distinct ids map to distinct pairs.
fn zh_word(id: usize) -> String {
    let base = 0x4E00u32;
    let hi = char::from_u32(base + 1000 + (id / 97) as u32).unwrap();
    let lo = char::from_u32(base + 3000 + (id % 97) as u32).unwrap();
    format!("{hi}{lo}")
}

const BACKGROUND_WORDS: usize = 600;

struct Builder {
    rng: ChaCha8Rng,
}

/// A sentence as word ids.
type WordIds = Vec<usize>;

impl Builder {
    fn background_sentence(&mut self, len: usize) -> WordIds {
        (0..len).map(|_| self.rng.gen_range(0..BACKGROUND_WORDS)).collect()
    }

    fn background_doc(&mut self, sentences: usize) -> Vec<WordIds> {
        (0..sentences)
            .map(|_| {
                let len = self.rng.gen_range(6..14);
                self.background_sentence(len)
            })
            .collect()
    }
}

fn render_en(sentences: &[WordIds]) -> String {
    sentences
        .iter()
        .map(|s| {
            let mut words: Vec<String> = s.iter().map(|&w| en_word(w)).collect();
            if let Some(first) = words.first_mut() {
                let mut c = first.chars();
                *first = c.next().map(|h| h.to_uppercase().chain(c).collect()).unwrap_or_default();
            }
            format!("{}.", words.join(" "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn render_zh(sentences: &[WordIds]) -> String {
    sentences
        .iter()
        .map(|s| format!("{}。", s.iter().map(|&w| zh_word(w)).collect::<String>()))
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCollection {
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    // Topic words live above the background vocabulary.
    let topic_words: Vec<Vec<usize>> = (0..spec.num_topics)
        .map(|t| (0..3).map(|j| BACKGROUND_WORDS + t * 3 + j).collect())
        .collect();

    // Sentences of each document, with its (topic, grade) judgments.
    let mut docs: Vec<(Vec<WordIds>, Judgments)> = Vec::new();
    for (t, words) in topic_words.iter().enumerate() {
        for r in 0..spec.relevant_per_topic {
            let n = b.rng.gen_range(5..9);
            let mut sents = b.background_doc(n);
            let target = b.rng.gen_range(0..n);
            let word = words[r % words.len()];
            let pos = b.rng.gen_range(0..sents[target].len());
            sents[target].insert(pos, word);
            if b.rng.gen_bool(0.5) {
                let other = b.rng.gen_range(0..n);
                let w2 = words[(r + 1) % words.len()];
                sents[other].push(w2);
            }
            let grade = if r == 0 { 2 } else { 1 };
            docs.push((sents, vec![(t, grade)]));
        }
        for _ in 0..spec.distractors_per_topic {
            let n = b.rng.gen_range(1..3);
            let mut sents = b.background_doc(n);
            for s in sents.iter_mut() {
                for _ in 0..b.rng.gen_range(1..3) {
                    let w = *words.choose(&mut b.rng).expect("topic words");
                    let pos = b.rng.gen_range(0..=s.len());
                    s.insert(pos, w);
                }
            }
            docs.push((sents, vec![(t, 0)]));
        }
    }
    for i in 0..spec.background_docs {
        let n = b.rng.gen_range(2..8);
        let sents = b.background_doc(n);
        let judged = if i % 5 == 0 {
            vec![(i % spec.num_topics.max(1), 0)]
        } else {
            Vec::new()
        };
        docs.push((sents, judged));
    }
    docs.shuffle(&mut b.rng);

    let mut corpus_en = Vec::with_capacity(docs.len());
    let mut corpus_zh = Vec::with_capacity(docs.len());
    let mut qrels = Qrels::new();
    let topic_id = |t: usize| format!("S{:03}", t + 1);
    for (i, (sents, judged)) in docs.iter().enumerate() {
        let doc_id = format!("SYN-{:04}", i + 1);
        corpus_en.push(Document::new(&doc_id, render_en(sents), "en"));
        corpus_zh.push(Document::new(&doc_id, render_zh(sents), "zh"));
        for &(t, g) in judged {
            qrels.insert(topic_id(t), doc_id.as_str(), g);
        }
    }

    let topics = topic_words
        .iter()
        .enumerate()
        .map(|(t, words)| {
            let en: Vec<String> = words.iter().map(|&w| en_word(w)).collect();
            let zh: String = words.iter().map(|&w| zh_word(w)).collect();
            let titles = BTreeMap::from([("en".to_string(), en.join(" ")), ("zh".to_string(), zh.clone())]);
            let descriptions = BTreeMap::from([
                ("en".to_string(), format!("Find documents discussing {}.", en.join(" and "))),
                ("zh".to_string(), format!("{zh}。")),
            ]);
            Topic {
                topic_id: topic_id(t),
                titles,
                descriptions,
            }
        })
        .collect();

    SyntheticCollection {
        corpus_en,
        corpus_zh,
        topics,
        qrels,
    }
}
