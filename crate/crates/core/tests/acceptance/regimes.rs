//! The desk-scale training runs on the synthetic corpora.

use std::time::{Duration, Instant};

use sqlgen_core::datagen::{generate_dataset, parse_templates, split_by_sizes, synthetic};
use sqlgen_core::metrics::EvalReport;
use sqlgen_core::train::{self, prepare, Task, TrainConfig, TrainMode};
use sqlgen_core::vocab::{LexiconOptions, ValueLexicon, Vocabulary};
use sqlgen_core::{seeded_rng, MaskConfig};

#[derive(Debug, Clone, Copy)]
pub enum Regime {
    /// One table, two queried attributes, single-condition templates.
    Easy,
    /// Three tables, one- and two-condition templates.
    Hard,
}

pub struct Run {
    pub report: String,
    pub untrained: EvalReport,
    pub test: EvalReport,
    pub params: Vec<u8>,
    pub elapsed: Duration,
}

impl Run {
    /// Everything that must repeat bit for bit under the same seed.
    pub fn fingerprint(&self) -> (String, String, String, Vec<u8>) {
        (
            self.report.clone(),
            self.untrained.to_key_values(),
            self.test.to_key_values(),
            self.params.clone(),
        )
    }
}

pub fn run(regime: Regime, mode: TrainMode, seed: u64, patience: usize) -> Run {
    let start = Instant::now();
    let (corpus, sizes) = match regime {
        Regime::Easy => (synthetic::easy(seed), [100, 20, 20]),
        Regime::Hard => (synthetic::hard(seed), [400, 50, 50]),
    };
    let db = &corpus.db;
    let templates = parse_templates(corpus.templates, db.schema()).expect("templates parse");
    let mut rng = seeded_rng(seed);
    let (examples, _) = generate_dataset(db, &templates, sizes.iter().sum(), &mut rng).expect("dataset");
    let (tr, va, te) = split_by_sizes(examples, sizes, &mut rng);
    let lexicon = ValueLexicon::build(db, LexiconOptions::default());
    let (tr, va, te) = (prepare(&tr, &lexicon), prepare(&va, &lexicon), prepare(&te, &lexicon));
    let (vocab, _) = Vocabulary::build(db.schema(), tr.iter().map(|i| &i.source));
    let task = Task {
        db,
        vocab: &vocab,
        lexicon: &lexicon,
        mask: MaskConfig::default(),
    };
    let config = TrainConfig {
        mode,
        seed,
        patience,
        ..TrainConfig::default()
    };
    let p0 = train::init_params(&vocab, &config);
    let untrained = task.evaluate(&p0, &te, config.max_len);
    let (params, report) = train::train(&task, &tr, &va, p0, &config).expect("training runs");
    let test = task.evaluate(&params, &te, config.max_len);
    Run {
        report: report.to_lines(),
        untrained,
        test,
        params: params.to_bytes(),
        elapsed: start.elapsed(),
    }
}
