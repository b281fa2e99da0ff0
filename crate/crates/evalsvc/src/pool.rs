//! Stimulus pool: tab-separated `item_id, context, reference, variant,
//! model_prediction` rows with a header line.

use std::path::Path;

use orderlab_core::rng::SplitMix64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("cannot read pool {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("pool line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("pool is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusItem {
    pub item_id: u64,
    pub context: String,
    pub reference: String,
    pub variant: String,
    /// True when the classifier chose the reference.
    pub model_chose_reference: bool,
}

/// What a participant sees; carries no field identifying the reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Presentation {
    pub item_id: u64,
    pub context: String,
    pub option_a: String,
    pub option_b: String,
}

impl StimulusItem {
    /// Whether the reference is shown as option A: one bit of a stream keyed
    /// by `(seed, item_id)`, so every participant sees the same order.
    pub fn reference_is_a(&self, seed: u64) -> bool {
        SplitMix64::for_item(seed, &self.item_id.to_string()).next() & 1 == 0
    }

    pub fn present(&self, seed: u64) -> Presentation {
        let (a, b) =
            if self.reference_is_a(seed) { (&self.reference, &self.variant) } else { (&self.variant, &self.reference) };
        Presentation { item_id: self.item_id, context: self.context.clone(), option_a: a.clone(), option_b: b.clone() }
    }
}

const HEADER: [&str; 5] = ["item_id", "context", "reference", "variant", "model_prediction"];

/// `model_prediction` is `1`/`reference` when the model chose the reference
/// and `0`/`variant` otherwise. Items are returned sorted by id.
pub fn parse_pool(text: &str) -> Result<Vec<StimulusItem>, PoolError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = lines.next().ok_or(PoolError::Empty)?;
    let cols: Vec<&str> = header.1.split('\t').map(str::trim).collect();
    if cols != HEADER {
        return Err(PoolError::Format { line: header.0 + 1, message: format!("expected header {}", HEADER.join(" ")) });
    }
    let mut items = Vec::new();
    for (i, line) in lines {
        let err = |message: String| PoolError::Format { line: i + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let item_id = f[0].trim().parse().map_err(|_| err(format!("bad item id {:?}", f[0])))?;
        let model_chose_reference = match f[4].trim() {
            "1" | "reference" => true,
            "0" | "variant" => false,
            other => return Err(err(format!("bad model_prediction {other:?}"))),
        };
        if f[2] == f[3] {
            return Err(err("reference and variant are identical".into()));
        }
        items.push(StimulusItem {
            item_id,
            context: f[1].to_string(),
            reference: f[2].to_string(),
            variant: f[3].to_string(),
            model_chose_reference,
        });
    }
    if items.is_empty() {
        return Err(PoolError::Empty);
    }
    items.sort_by_key(|it| it.item_id);
    if let Some(w) = items.windows(2).find(|w| w[0].item_id == w[1].item_id) {
        return Err(PoolError::Format { line: 0, message: format!("duplicate item id {}", w[0].item_id) });
    }
    Ok(items)
}

pub fn load_pool(path: &Path) -> Result<Vec<StimulusItem>, PoolError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| PoolError::Io { path: path.display().to_string(), source })?;
    parse_pool(&text)
}

/// Pool file text for `items`, the inverse of [`parse_pool`].
pub fn write_pool(items: &[StimulusItem]) -> String {
    let mut out = format!("{}\n", HEADER.join("\t"));
    for it in items {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            it.item_id,
            it.context,
            it.reference,
            it.variant,
            u8::from(it.model_chose_reference)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const POOL: &str = "item_id\tcontext\treference\tvariant\tmodel_prediction\n\
        2\tc2\tr2\tv2\t0\n\
        1\tc1\tr1\tv1\treference\n";

    #[test]
    fn parses_and_sorts() {
        let items = parse_pool(POOL).unwrap();
        assert_eq!(items.iter().map(|i| i.item_id).collect::<Vec<_>>(), vec![1, 2]);
        assert!(items[0].model_chose_reference && !items[1].model_chose_reference);
        assert_eq!(parse_pool(&write_pool(&items)).unwrap(), items);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(parse_pool("x\n"), Err(PoolError::Format { line: 1, .. })));
        let bad = "item_id\tcontext\treference\tvariant\tmodel_prediction\n1\tc\tr\tr\t1\n";
        assert!(matches!(parse_pool(bad), Err(PoolError::Format { line: 2, .. })));
        let dup = "item_id\tcontext\treference\tvariant\tmodel_prediction\n1\tc\tr\tv\t1\n1\tc\tr\tw\t1\n";
        assert!(parse_pool(dup).is_err());
        assert!(matches!(
            parse_pool("item_id\tcontext\treference\tvariant\tmodel_prediction\n"),
            Err(PoolError::Empty)
        ));
    }

    #[test]
    fn presentation_is_seeded_and_balanced() {
        let items: Vec<StimulusItem> = (1..=400)
            .map(|i| StimulusItem {
                item_id: i,
                context: "c".into(),
                reference: format!("r{i}"),
                variant: format!("v{i}"),
                model_chose_reference: true,
            })
            .collect();
        let a: Vec<bool> = items.iter().map(|it| it.reference_is_a(5)).collect();
        let b: Vec<bool> = items.iter().map(|it| it.reference_is_a(5)).collect();
        assert_eq!(a, b);
        let shown_first = a.iter().filter(|&&x| x).count();
        assert!((150..250).contains(&shown_first), "{shown_first}");
        let p = items[0].present(5);
        assert_eq!(p.option_a == items[0].reference, a[0]);
    }
}
