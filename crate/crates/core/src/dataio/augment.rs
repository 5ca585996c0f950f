use rand::seq::index::sample;

use crate::data::{QMatrix, Response, ResponseDataset};
use crate::error::{Error, Result};
use crate::training::rng;

pub const SHADOW_SUFFIX: &str = "#shadow";

/// The identifier a shadow copy was made from, if `id` names one.
pub fn shadow_source(id: &str) -> Option<&str> {
    id.strip_suffix(SHADOW_SUFFIX)
}

fn pick(n: usize, frac: f64, rng: &mut crate::training::Rng) -> Vec<usize> {
    let count = ((frac * n as f64).ceil() as usize).min(n);
    let mut chosen = sample(rng, n, count).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Adds duplicate learners and items. `ceil(frac * N)` learners get a shadow
/// copy with the same response row; then `ceil(frac * M)` items get a shadow
/// copy whose column is copied over the enlarged learner set, so shadow
/// learners answer shadow items too. Shadow ids end in `#shadow` and are
/// appended after the originals.
pub fn augment_shadow(ds: &ResponseDataset, frac: f64, seed: u64) -> Result<ResponseDataset> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::Config(format!(
            "shadow fraction must lie in (0, 1], got {frac}"
        )));
    }
    let mut rng = rng(seed);
    let n = ds.n_learners();
    let m = ds.n_items();
    let shadow_learners = pick(n, frac, &mut rng);
    let shadow_items = pick(m, frac, &mut rng);

    let mut learners = ds.learners().clone();
    let mut learner_copy = vec![None; n];
    for &l in &shadow_learners {
        let id = format!("{}{SHADOW_SUFFIX}", ds.learners().id(l).unwrap_or_default());
        learner_copy[l] = Some(learners.intern(&id));
    }
    let mut items = ds.items().clone();
    let mut item_copy = vec![None; m];
    for &i in &shadow_items {
        let id = format!("{}{SHADOW_SUFFIX}", ds.items().id(i).unwrap_or_default());
        item_copy[i] = Some(items.intern(&id));
    }

    let mut responses = ds.responses().to_vec();
    for r in ds.responses() {
        if let Some(l) = learner_copy[r.learner] {
            responses.push(Response { learner: l, ..*r });
        }
    }
    let with_learners = responses.len();
    for k in 0..with_learners {
        let r = responses[k];
        if let Some(i) = item_copy[r.item] {
            responses.push(Response { item: i, ..r });
        }
    }
    ResponseDataset::with_index(learners, items, responses)
}

/// Extends `q` with rows for the shadow items of `augmented`, copying each
/// original's row, and aligns it to `augmented`'s item order.
pub fn augment_qmatrix(q: &QMatrix, augmented: &ResponseDataset) -> Result<QMatrix> {
    let mut ids = q.item_ids().to_vec();
    let mut rows = q.rows().to_vec();
    for id in augmented.items().iter() {
        if let Some(src) = shadow_source(id) {
            let pos = q.item_ids().iter().position(|x| x == src).ok_or_else(|| {
                Error::QMatrixMismatch(format!(
                    "shadow item `{id}` has no q-matrix row for `{src}`"
                ))
            })?;
            ids.push(id.to_owned());
            rows.push(q.row(pos).to_vec());
        }
    }
    QMatrix::new(q.knowledge_labels().to_vec(), ids, rows)?.aligned_to(augmented.items())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_vectors;

    fn base() -> ResponseDataset {
        ResponseDataset::from_records([
            ("s0", "e0", 1),
            ("s0", "e1", 0),
            ("s1", "e0", 0),
            ("s2", "e1", 1),
            ("s3", "e0", 1),
            ("s3", "e1", 1),
        ])
        .unwrap()
    }

    #[test]
    fn shadows_copy_rows_and_columns() {
        let ds = base();
        let aug = augment_shadow(&ds, 0.5, 4).unwrap();
        assert_eq!(aug.n_learners(), 6);
        assert_eq!(aug.n_items(), 3);
        let (lv, iv) = build_vectors(&aug);
        for (i, id) in aug.learners().iter().enumerate() {
            if let Some(src) = shadow_source(id) {
                let orig = aug.learners().get(src).unwrap();
                let (shadow_row, orig_row) = (&lv[i].values()[..2], &lv[orig].values()[..2]);
                assert_eq!(shadow_row, orig_row);
                assert_eq!(lv[i], lv[orig]);
            }
        }
        for (j, id) in aug.items().iter().enumerate() {
            if let Some(src) = shadow_source(id) {
                assert_eq!(iv[j], iv[aug.items().get(src).unwrap()]);
            }
        }
        assert_eq!(aug, augment_shadow(&ds, 0.5, 4).unwrap());
    }

    #[test]
    fn qmatrix_follows_shadows() {
        let ds = base();
        let aug = augment_shadow(&ds, 0.5, 4).unwrap();
        let q = QMatrix::new(
            vec!["k0".into(), "k1".into()],
            vec!["e0".into(), "e1".into()],
            vec![vec![1, 0], vec![0, 1]],
        )
        .unwrap();
        let qa = augment_qmatrix(&q, &aug).unwrap();
        assert!(qa.is_aligned_to(aug.items()));
        let shadow = aug
            .items()
            .iter()
            .position(|id| shadow_source(id).is_some())
            .unwrap();
        let src = aug
            .items()
            .get(shadow_source(aug.items().id(shadow).unwrap()).unwrap())
            .unwrap();
        assert_eq!(qa.row(shadow), qa.row(src));
    }
}
