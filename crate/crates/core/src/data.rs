//! Rating files, user splits and item embeddings.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::ItemId;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`, no header.
    Ml100kTab,
    /// `user::item::rating::timestamp`, no header.
    Ml1mColons,
    /// Header row `user,item,rating[,timestamp]`.
    GenericCsv,
}

impl std::str::FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml100k" | "ml100k-tab" => Ok(Self::Ml100kTab),
            "ml1m" | "ml1m-colons" => Ok(Self::Ml1mColons),
            "csv" | "generic-csv" => Ok(Self::GenericCsv),
            other => Err(Error::Config(format!("unknown rating format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub item: ItemId,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Positive interactions with densely re-indexed users and items.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTable {
    pub records: Vec<Interaction>,
    /// Raw id of each dense user index.
    pub user_ids: Vec<String>,
    /// Raw id of each dense item index.
    pub item_ids: Vec<String>,
    pub source: PathBuf,
    pub format: RatingFormat,
    /// Data lines read (header excluded).
    pub raw_lines: usize,
    /// Lines dropped by the rating threshold.
    pub below_threshold: usize,
    /// Lines dropped as repeated (user, item) pairs.
    pub duplicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} users, {} items, {} interactions",
            self.users, self.items, self.interactions
        )
    }
}

/// Numeric ids sort numerically, everything else lexicographically after.
fn id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn dense_index(raw: impl Iterator<Item = String>) -> (Vec<String>, HashMap<String, usize>) {
    let mut ids: Vec<String> = raw.collect::<HashSet<_>>().into_iter().collect();
    ids.sort_by(|a, b| id_order(a, b));
    let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    (ids, index)
}

pub fn parse_ratings(path: &Path, format: RatingFormat, positive_threshold: f64) -> Result<InteractionTable> {
    let file = File::open(path)?;
    parse_ratings_from(BufReader::new(file), path, format, positive_threshold)
}

/// Raw user id, raw item id, rating and optional timestamp.
type RawRecord = (String, String, f64, Option<i64>);

/// Keeps records with rating strictly above `positive_threshold`, keeps the
/// highest rating of repeated (user, item) pairs, and re-indexes ids densely
/// in ascending raw-id order.
pub fn parse_ratings_from<R: Read>(
    reader: R,
    path: &Path,
    format: RatingFormat,
    positive_threshold: f64,
) -> Result<InteractionTable> {
    let reader = BufReader::new(reader);
    let mut kept: Vec<RawRecord> = Vec::new();
    let mut raw_lines = 0;
    let mut below_threshold = 0;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if format == RatingFormat::GenericCsv && n == 0 {
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            if header.len() < 3 || header[0] != "user" || header[1] != "item" || header[2] != "rating" {
                return Err(parse_err(line_no, "expected header `user,item,rating[,timestamp]`".into()));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        raw_lines += 1;
        let fields: Vec<&str> = match format {
            RatingFormat::Ml100kTab => line.split('\t').collect(),
            RatingFormat::Ml1mColons => line.split("::").collect(),
            RatingFormat::GenericCsv => line.split(',').map(str::trim).collect(),
        };
        let ts_ok = match format {
            RatingFormat::GenericCsv => fields.len() == 3 || fields.len() == 4,
            _ => fields.len() == 4,
        };
        if !ts_ok {
            return Err(parse_err(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(line_no, "empty user or item id".into()));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("invalid rating `{}`", fields[2])))?;
        let timestamp = match fields.get(3) {
            Some(ts) => Some(
                ts.parse::<i64>()
                    .map_err(|_| parse_err(line_no, format!("invalid timestamp `{ts}`")))?,
            ),
            None => None,
        };
        if rating > positive_threshold {
            kept.push((fields[0].to_string(), fields[1].to_string(), rating, timestamp));
        } else {
            below_threshold += 1;
        }
    }

    let mut best: HashMap<(String, String), usize> = HashMap::new();
    let mut survivors: Vec<Option<RawRecord>> = Vec::with_capacity(kept.len());
    let mut duplicates = 0;
    for rec in kept {
        let key = (rec.0.clone(), rec.1.clone());
        match best.get(&key) {
            Some(&idx) => {
                duplicates += 1;
                let prev = survivors[idx].as_ref().expect("kept record");
                if rec.2 > prev.2 {
                    survivors[idx] = Some(rec);
                }
            }
            None => {
                best.insert(key, survivors.len());
                survivors.push(Some(rec));
            }
        }
    }
    let survivors: Vec<_> = survivors.into_iter().flatten().collect();
    if survivors.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }

    let (user_ids, user_index) = dense_index(survivors.iter().map(|r| r.0.clone()));
    let (item_ids, item_index) = dense_index(survivors.iter().map(|r| r.1.clone()));
    let records = survivors
        .into_iter()
        .map(|(u, i, rating, timestamp)| Interaction {
            user: user_index[&u],
            item: item_index[&i],
            rating,
            timestamp,
        })
        .collect();
    Ok(InteractionTable {
        records,
        user_ids,
        item_ids,
        source: path.to_path_buf(),
        format,
        raw_lines,
        below_threshold,
        duplicates,
    })
}

impl InteractionTable {
    pub fn stats(&self) -> DatasetStats {
        let users: HashSet<usize> = self.records.iter().map(|r| r.user).collect();
        let items: HashSet<ItemId> = self.records.iter().map(|r| r.item).collect();
        DatasetStats {
            users: users.len(),
            items: items.len(),
            interactions: self.records.len(),
        }
    }

    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    /// Items interacted with by each dense user id.
    pub fn positives_by_user(&self) -> Vec<HashSet<ItemId>> {
        let mut out = vec![HashSet::new(); self.user_ids.len()];
        for r in &self.records {
            out[r.user].insert(r.item);
        }
        out
    }

    /// Sorted distinct items present in the records.
    pub fn items_present(&self) -> Vec<ItemId> {
        let mut items: Vec<ItemId> = self.records.iter().map(|r| r.item).collect::<HashSet<_>>().into_iter().collect();
        items.sort_unstable();
        items
    }

    /// Keeps only the `n` most frequent items (ties to the smaller id) and
    /// re-indexes items densely.
    pub fn top_items(&self, n: usize) -> InteractionTable {
        let mut counts = vec![0usize; self.item_ids.len()];
        for r in &self.records {
            counts[r.item] += 1;
        }
        let mut order: Vec<ItemId> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let mut keep: Vec<ItemId> = order.into_iter().take(n).collect();
        keep.sort_unstable();
        let remap: HashMap<ItemId, ItemId> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let records = self
            .records
            .iter()
            .filter_map(|r| remap.get(&r.item).map(|&item| Interaction { item, ..*r }))
            .collect();
        InteractionTable {
            records,
            item_ids: keep.iter().map(|&i| self.item_ids[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// Writes `dense,raw` maps for users and items.
    pub fn write_id_maps(&self, users: impl Write, items: impl Write) -> Result<()> {
        for (ids, out) in [(&self.user_ids, Box::new(users) as Box<dyn Write>), (&self.item_ids, Box::new(items))] {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["index", "raw_id"])?;
            for (i, raw) in ids.iter().enumerate() {
                w.write_record([i.to_string(), raw.clone()])?;
            }
            w.flush()?;
        }
        Ok(())
    }

    fn restricted_to(&self, users: &HashSet<usize>) -> InteractionTable {
        InteractionTable {
            records: self.records.iter().filter(|r| users.contains(&r.user)).copied().collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_fraction: 0.8,
        }
    }
}

/// A user-level partition. Both tables keep the parent's dense ids.
#[derive(Debug, Clone)]
pub struct UserSplit {
    pub train_users: Vec<usize>,
    pub test_users: Vec<usize>,
    pub train: InteractionTable,
    pub test: InteractionTable,
}

/// Shuffles user ids with the split stream of `config.seed` and assigns the
/// first `⌊f·U⌋` to training.
pub fn split_users(table: &InteractionTable, config: &SplitConfig) -> Result<UserSplit> {
    let users = table.user_count();
    if users < 2 {
        return Err(Error::Config(format!("need at least 2 users to split, found {users}")));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {}",
            config.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..users).collect();
    order.shuffle(&mut seed::rng(config.seed, 0, Stream::Split));
    let cut = (config.train_fraction * users as f64).floor() as usize;
    let mut train_users = order[..cut].to_vec();
    let mut test_users = order[cut..].to_vec();
    train_users.sort_unstable();
    test_users.sort_unstable();
    let train = table.restricted_to(&train_users.iter().copied().collect());
    let test = table.restricted_to(&test_users.iter().copied().collect());
    Ok(UserSplit {
        train_users,
        test_users,
        train,
        test,
    })
}

/// Per-dimension affine map `v ↦ 2(v - min)/(max - min) - 1`; constant
/// dimensions map to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub min: f64,
    pub max: f64,
}

impl AffineMap {
    pub fn apply(&self, v: f64) -> f64 {
        if self.max > self.min {
            2.0 * (v - self.min) / (self.max - self.min) - 1.0
        } else {
            0.0
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v + 1.0) / 2.0 * (self.max - self.min) + self.min
        } else {
            self.min
        }
    }
}

/// Item vectors keyed by raw item id, normalised into `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub normalization: Vec<AffineMap>,
}

impl EmbeddingTable {
    /// Min-max normalises raw vectors per dimension.
    pub fn normalized(ids: Vec<String>, raw: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if ids.len() != raw.len() {
            return Err(Error::Embeddings("ids and vectors differ in length".into()));
        }
        if raw.is_empty() {
            return Err(Error::Embeddings("no embedding rows".into()));
        }
        for row in &raw {
            if row.len() != dim {
                return Err(Error::Dimension {
                    what: "embedding",
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        let normalization: Vec<AffineMap> = (0..dim)
            .map(|j| {
                let (min, max) = raw
                    .iter()
                    .map(|r| r[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                AffineMap { min, max }
            })
            .collect();
        let vectors = raw
            .iter()
            .map(|r| r.iter().zip(&normalization).map(|(v, map)| map.apply(*v)).collect())
            .collect();
        Ok(Self {
            dim,
            ids,
            vectors,
            normalization,
        })
    }

    /// Raw values recovered through the stored maps.
    pub fn denormalized(&self) -> Vec<Vec<f64>> {
        self.vectors
            .iter()
            .map(|r| r.iter().zip(&self.normalization).map(|(v, map)| map.invert(*v)).collect())
            .collect()
    }

    /// Vectors ordered by dense item index, given each index's raw id.
    pub fn align(&self, item_ids: &[String]) -> Result<Vec<Vec<f64>>> {
        let index: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        item_ids
            .iter()
            .map(|raw| {
                index
                    .get(raw.as_str())
                    .map(|&i| self.vectors[i].clone())
                    .ok_or_else(|| Error::Embeddings(format!("item `{raw}` has no embedding")))
            })
            .collect()
    }
}

/// Reads a CSV with header `item,e0,…,e{d-1}` and normalises it.
pub fn load_embeddings(path: &Path, expected_d: usize) -> Result<EmbeddingTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != expected_d + 1 || &headers[0] != "item" {
        return Err(Error::Embeddings(format!(
            "expected header item,e0..e{} ({} columns), found {} columns",
            expected_d.saturating_sub(1),
            expected_d + 1,
            headers.len()
        )));
    }
    let mut ids = Vec::new();
    let mut raw = Vec::new();
    let mut seen = HashSet::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        if rec.len() != expected_d + 1 {
            return Err(Error::Dimension {
                what: "embedding row",
                expected: expected_d,
                found: rec.len().saturating_sub(1),
            });
        }
        let id = rec[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Embeddings(format!("duplicate item `{id}` on line {line}")));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("invalid value `{v}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        ids.push(id);
        raw.push(values);
    }
    EmbeddingTable::normalized(ids, raw, expected_d)
}

/// `count × dim` i.i.d. uniform draws on `[low, high)`.
pub fn uniform_rows<R: Rng + ?Sized>(count: usize, dim: usize, low: f64, high: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(low..high)).collect())
        .collect()
}

/// Uniform synthetic vectors for items `0..L`, without normalisation (the
/// identity map is recorded).
pub fn synthetic_embeddings(l: usize, d: usize, low: f64, high: f64, seed: u64) -> Result<EmbeddingTable> {
    if l == 0 || d == 0 {
        return Err(Error::Config("L and d must be at least 1".into()));
    }
    if !(low < high) {
        return Err(Error::Config(format!("empty range [{low}, {high})")));
    }
    let vectors = uniform_rows(l, d, low, high, &mut seed::rng(seed, 0, Stream::Instance));
    Ok(EmbeddingTable {
        dim: d,
        ids: (0..l).map(|i| i.to_string()).collect(),
        vectors,
        normalization: vec![AffineMap { min: -1.0, max: 1.0 }; d],
    })
}

/// Item vectors from the training interactions: each training user draws a
/// Gaussian-like code in `[-1, 1]^d`, an item's raw vector is the sum of the
/// codes of the users who liked it, and the result is min-max normalised.
/// Items absent from training get no meaningful vector and should be left
/// out of the ground set.
pub fn interaction_embeddings(train: &InteractionTable, d: usize, seed: u64) -> Result<EmbeddingTable> {
    if d == 0 {
        return Err(Error::Config("d must be at least 1".into()));
    }
    let mut rng = seed::rng(seed, 0, Stream::Instance);
    let codes: Vec<Vec<f64>> = (0..train.user_count())
        .map(|_| {
            (0..d)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() / 3.0)
                .collect()
        })
        .collect();
    let mut raw = vec![vec![0.0; d]; train.item_count()];
    for r in &train.records {
        for (acc, c) in raw[r.item].iter_mut().zip(&codes[r.user]) {
            *acc += c;
        }
    }
    EmbeddingTable::normalized(train.item_ids.clone(), raw, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, format: RatingFormat, threshold: f64) -> Result<InteractionTable> {
        parse_ratings_from(text.as_bytes(), Path::new("mem"), format, threshold)
    }

    #[test]
    fn strict_threshold() {
        let t = parse("1\t10\t2\t5\n1\t11\t3\t6\n2\t12\t4\t7\n", RatingFormat::Ml100kTab, 3.0).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.below_threshold, 2);
        assert_eq!(t.records.len() + t.below_threshold + t.duplicates, t.raw_lines);
        assert_eq!(t.user_ids, vec!["2"]);
        assert_eq!(t.records[0].timestamp, Some(7));
    }

    #[test]
    fn formats() {
        let t = parse("1::5::5::100\n2::3::4::100\n10::5::5::1\n", RatingFormat::Ml1mColons, 3.0).unwrap();
        assert_eq!(t.stats(), DatasetStats { users: 3, items: 2, interactions: 3 });
        // Numeric ordering: raw "10" sorts after "2".
        assert_eq!(t.user_ids, vec!["1", "2", "10"]);
        let t = parse("user,item,rating\na,x,5\nb,y,1\n", RatingFormat::GenericCsv, 3.0).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].timestamp, None);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse("1\t2\t5\t0\n1\t2\n", RatingFormat::Ml100kTab, 3.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse("1\t2\tfive\t0\n", RatingFormat::Ml100kTab, 3.0) {
            Err(Error::Parse { line: 1, message, .. }) => assert!(message.contains("five")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("1\t2\t1\t0\n", RatingFormat::Ml100kTab, 3.0), Err(Error::EmptyDataset(_))));
        assert!(matches!(parse("u,i,r\n", RatingFormat::GenericCsv, 3.0), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicates_keep_highest() {
        let t = parse("1\t2\t4\t0\n1\t2\t5\t1\n", RatingFormat::Ml100kTab, 3.0).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].rating, 5.0);
        assert_eq!(t.duplicates, 1);
    }

    fn ten_users() -> InteractionTable {
        let text: String = (0..10).map(|u| format!("{u}\t{}\t5\t0\n{u}\t99\t4\t0\n", u % 3)).collect();
        parse(&text, RatingFormat::Ml100kTab, 3.0).unwrap()
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let t = ten_users();
        let spec = SplitConfig { seed: 42, train_fraction: 0.8 };
        let s = split_users(&t, &spec).unwrap();
        assert_eq!(s.train_users.len(), 8);
        assert_eq!(s.test_users.len(), 2);
        assert!(s.train_users.iter().all(|u| !s.test_users.contains(u)));
        assert_eq!(s.train.records.len() + s.test.records.len(), t.records.len());
        let again = split_users(&t, &spec).unwrap();
        assert_eq!(s.train_users, again.train_users);
        assert!(split_users(&t, &SplitConfig { seed: 1, train_fraction: 1.0 }).is_err());
    }

    #[test]
    fn top_items_filter() {
        let t = ten_users();
        let top = t.top_items(1);
        assert_eq!(top.item_ids, vec!["99"]);
        assert_eq!(top.records.len(), 10);
        assert!(top.records.iter().all(|r| r.item == 0));
    }

    #[test]
    fn minmax_endpoints_and_constant_dims() {
        let e = EmbeddingTable::normalized(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.0, 3.0], vec![5.0, 3.0], vec![10.0, 3.0]],
            2,
        )
        .unwrap();
        assert_eq!(e.vectors, vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]);
        let back = e.denormalized();
        assert_eq!(back[1], vec![5.0, 3.0]);
    }

    #[test]
    fn align_reports_gaps() {
        let e = EmbeddingTable::normalized(vec!["a".into()], vec![vec![1.0]], 1).unwrap();
        assert!(e.align(&["a".into()]).is_ok());
        assert!(matches!(e.align(&["b".into()]), Err(Error::Embeddings(_))));
    }

    #[test]
    fn synthetic_ranges_and_determinism() {
        let a = synthetic_embeddings(200, 10, 0.0, 0.5, 3).unwrap();
        assert!(a.vectors.iter().flatten().all(|v| (0.0..=0.5).contains(v)));
        assert_eq!(a, synthetic_embeddings(200, 10, 0.0, 0.5, 3).unwrap());
        assert!(synthetic_embeddings(2, 2, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn interaction_embeddings_are_bounded() {
        let t = ten_users();
        let e = interaction_embeddings(&t, 4, 1).unwrap();
        assert_eq!(e.vectors.len(), t.item_count());
        assert!(e.vectors.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }
}
