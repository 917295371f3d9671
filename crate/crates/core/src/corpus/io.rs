//! JSONL persistence for examples and the latent-vector oracle sidecar.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{
    ArtworkOption, CorpusError, Engagement, Example, ExampleSet, Interaction, Result, SplitLabel,
    TitleCard, UserProfile,
};

/// On-disk shape of one example. Latent vectors are never written here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleRecord<'a> {
    pub user_id: &'a str,
    pub title_id: &'a str,
    pub title_name: &'a str,
    pub genres: &'a [String],
    pub history: Vec<HistoryRecord<'a>>,
    pub options: Vec<OptionRecord<'a>>,
    pub truth_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRecord<'a> {
    pub ts: i64,
    pub title: &'a str,
    pub genres: &'a str,
    pub engagement: Engagement,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionRecord<'a> {
    pub id: u32,
    pub caption: &'a str,
}

impl<'a> From<&'a Example> for ExampleRecord<'a> {
    fn from(e: &'a Example) -> Self {
        ExampleRecord {
            user_id: &e.user.user_id,
            title_id: &e.title.title_id,
            title_name: &e.title.name,
            genres: &e.title.genres,
            history: e
                .user
                .interactions
                .iter()
                .map(|i| HistoryRecord {
                    ts: i.ts,
                    title: &i.title,
                    genres: &i.genres,
                    engagement: i.engagement,
                })
                .collect(),
            options: e
                .title
                .options
                .iter()
                .map(|o| OptionRecord {
                    id: o.option_id,
                    caption: &o.caption,
                })
                .collect(),
            truth_index: e.truth_index,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_examples<W: Write>(mut writer: W, examples: &[Example]) -> std::io::Result<()> {
    for e in examples {
        serde_json::to_writer(&mut writer, &ExampleRecord::from(e))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_examples(set: &ExampleSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_examples(BufWriter::new(file), &set.examples).map_err(|e| io_err(path, e))
}

pub fn load_examples(path: impl AsRef<Path>, split: SplitLabel) -> Result<ExampleSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_examples(BufReader::new(file), split).map_err(|e| match e {
        CorpusError::Io { source, .. } => io_err(path, source),
        other => other,
    })
}

/// Parses and validates every line; the first bad line aborts the load.
pub fn read_examples<R: BufRead>(reader: R, split: SplitLabel) -> Result<ExampleSet> {
    let mut users: HashMap<String, Vec<Arc<UserProfile>>> = HashMap::new();
    let mut titles: HashMap<String, Vec<Arc<TitleCard>>> = HashMap::new();
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: "<reader>".into(),
            source,
        })?;
        let (user, title, truth_index) = parse_line(&line, line_no)?;
        let user = intern(&mut users, user.user_id.clone(), user);
        let title = intern(&mut titles, title.title_id.clone(), title);
        let example = Example {
            user,
            title,
            truth_index,
        };
        example.validate().map_err(|(field, message)| CorpusError::Malformed {
            line: line_no,
            field,
            message,
        })?;
        examples.push(example);
    }
    Ok(ExampleSet::new(examples, split))
}

fn intern<T: PartialEq>(pool: &mut HashMap<String, Vec<Arc<T>>>, id: String, value: T) -> Arc<T> {
    let bucket = pool.entry(id).or_default();
    if let Some(existing) = bucket.iter().find(|v| ***v == value) {
        return Arc::clone(existing);
    }
    let arc = Arc::new(value);
    bucket.push(Arc::clone(&arc));
    arc
}

struct Fields<'a> {
    line: usize,
    prefix: String,
    map: &'a Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn err(&self, field: &str, message: impl Into<String>) -> CorpusError {
        CorpusError::Malformed {
            line: self.line,
            field: format!("{}{}", self.prefix, field),
            message: message.into(),
        }
    }

    fn get(&self, field: &str) -> Result<&'a Value> {
        self.map.get(field).ok_or_else(|| self.err(field, "missing field"))
    }

    fn str(&self, field: &str) -> Result<&'a str> {
        self.get(field)?
            .as_str()
            .ok_or_else(|| self.err(field, "expected a string"))
    }

    fn int(&self, field: &str) -> Result<i64> {
        self.get(field)?
            .as_i64()
            .ok_or_else(|| self.err(field, "expected an integer"))
    }

    fn array(&self, field: &str) -> Result<&'a Vec<Value>> {
        self.get(field)?
            .as_array()
            .ok_or_else(|| self.err(field, "expected an array"))
    }

    fn nested(&self, field: &str, index: usize, value: &'a Value) -> Result<Fields<'a>> {
        let map = value
            .as_object()
            .ok_or_else(|| self.err(&format!("{field}[{index}]"), "expected an object"))?;
        Ok(Fields {
            line: self.line,
            prefix: format!("{}{field}[{index}].", self.prefix),
            map,
        })
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<(UserProfile, TitleCard, u32)> {
    let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        line: line_no,
        field: "<record>".into(),
        message: e.to_string(),
    })?;
    let map = value.as_object().ok_or_else(|| CorpusError::Malformed {
        line: line_no,
        field: "<record>".into(),
        message: "expected a JSON object".into(),
    })?;
    let f = Fields {
        line: line_no,
        prefix: String::new(),
        map,
    };

    let genres = f
        .array("genres")?
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.as_str()
                .map(str::to_string)
                .ok_or_else(|| f.err(&format!("genres[{i}]"), "expected a string"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut interactions = Vec::new();
    for (i, h) in f.array("history")?.iter().enumerate() {
        let h = f.nested("history", i, h)?;
        let engagement = h.str("engagement")?;
        interactions.push(Interaction {
            ts: h.int("ts")?,
            title: h.str("title")?.to_string(),
            genres: h.str("genres")?.to_string(),
            engagement: Engagement::parse(engagement)
                .ok_or_else(|| h.err("engagement", format!("unknown engagement `{engagement}`")))?,
        });
    }

    let mut options = Vec::new();
    for (i, o) in f.array("options")?.iter().enumerate() {
        let o = f.nested("options", i, o)?;
        let id = o.int("id")?;
        options.push(ArtworkOption {
            option_id: u32::try_from(id).map_err(|_| o.err("id", "option id out of range"))?,
            caption: o.str("caption")?.to_string(),
            latent: Vec::new(),
        });
    }

    let truth = f.int("truth_index")?;
    let truth_index =
        u32::try_from(truth).map_err(|_| f.err("truth_index", "truth_index out of range"))?;

    Ok((
        UserProfile {
            user_id: f.str("user_id")?.to_string(),
            interactions,
            latent: Vec::new(),
        },
        TitleCard {
            title_id: f.str("title_id")?.to_string(),
            name: f.str("title_name")?.to_string(),
            genres,
            options,
        },
        truth_index,
    ))
}

/// Hidden generator state stored next to an example file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleSidecar {
    pub preference_noise: f64,
    pub users: HashMap<String, Vec<f64>>,
    pub titles: HashMap<String, Vec<Vec<f64>>>,
}

impl OracleSidecar {
    pub fn from_examples(examples: &[Example], preference_noise: f64) -> Self {
        let mut sidecar = OracleSidecar {
            preference_noise,
            ..Default::default()
        };
        for e in examples {
            sidecar
                .users
                .entry(e.user.user_id.clone())
                .or_insert_with(|| e.user.latent.clone());
            sidecar.titles.entry(e.title.title_id.clone()).or_insert_with(|| {
                e.title.options.iter().map(|o| o.latent.clone()).collect()
            });
        }
        sidecar
    }

    /// Copies of `examples` with latent vectors restored where known.
    pub fn attach(&self, examples: &[Example]) -> Vec<Example> {
        let mut users: HashMap<*const UserProfile, Arc<UserProfile>> = HashMap::new();
        let mut titles: HashMap<*const TitleCard, Arc<TitleCard>> = HashMap::new();
        examples
            .iter()
            .map(|e| {
                let user = users
                    .entry(Arc::as_ptr(&e.user))
                    .or_insert_with(|| {
                        let mut u = (*e.user).clone();
                        if let Some(l) = self.users.get(&u.user_id) {
                            u.latent = l.clone();
                        }
                        Arc::new(u)
                    })
                    .clone();
                let title = titles
                    .entry(Arc::as_ptr(&e.title))
                    .or_insert_with(|| {
                        let mut t = (*e.title).clone();
                        if let Some(ls) = self.titles.get(&t.title_id) {
                            for (o, l) in t.options.iter_mut().zip(ls) {
                                o.latent = l.clone();
                            }
                        }
                        Arc::new(t)
                    })
                    .clone();
                Example {
                    user,
                    title,
                    truth_index: e.truth_index,
                }
            })
            .collect()
    }
}

pub fn write_oracle<W: Write>(sidecar: &OracleSidecar, mut w: W) -> std::io::Result<()> {
    let mut write = |v: Value| -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &v)?;
        w.write_all(b"\n")
    };
    let noise = if sidecar.preference_noise.is_infinite() {
        Value::String("inf".into())
    } else {
        Value::from(sidecar.preference_noise)
    };
    write(serde_json::json!({"kind": "meta", "preference_noise": noise}))?;
    let mut users: Vec<_> = sidecar.users.iter().collect();
    users.sort_by(|a, b| a.0.cmp(b.0));
    for (id, latent) in users {
        write(serde_json::json!({"kind": "user", "id": id, "latent": latent}))?;
    }
    let mut titles: Vec<_> = sidecar.titles.iter().collect();
    titles.sort_by(|a, b| a.0.cmp(b.0));
    for (id, options) in titles {
        write(serde_json::json!({"kind": "title", "id": id, "options": options}))?;
    }
    w.flush()
}

pub fn save_oracle(sidecar: &OracleSidecar, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_oracle(sidecar, BufWriter::new(file)).map_err(|e| io_err(path, e))
}

pub fn load_oracle(path: impl AsRef<Path>) -> Result<OracleSidecar> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_oracle(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => io_err(path, source),
        other => other,
    })
}

pub fn read_oracle<R: BufRead>(reader: R) -> Result<OracleSidecar> {
    let mut sidecar = OracleSidecar::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(Path::new("<reader>"), e))?;
        let bad = |field: &str, message: &str| CorpusError::Malformed {
            line: idx + 1,
            field: field.into(),
            message: message.into(),
        };
        let v: Value = serde_json::from_str(&line).map_err(|e| bad("<record>", &e.to_string()))?;
        let floats = |v: &Value| -> Option<Vec<f64>> {
            v.as_array()?.iter().map(Value::as_f64).collect()
        };
        match v.get("kind").and_then(Value::as_str) {
            Some("meta") => {
                sidecar.preference_noise = match v.get("preference_noise") {
                    Some(Value::String(s)) if s == "inf" => f64::INFINITY,
                    Some(n) => n.as_f64().ok_or_else(|| bad("preference_noise", "expected a number"))?,
                    None => return Err(bad("preference_noise", "missing field")),
                };
            }
            Some("user") => {
                let id = v.get("id").and_then(Value::as_str).ok_or_else(|| bad("id", "expected a string"))?;
                let latent = v.get("latent").and_then(floats).ok_or_else(|| bad("latent", "expected numbers"))?;
                sidecar.users.insert(id.to_string(), latent);
            }
            Some("title") => {
                let id = v.get("id").and_then(Value::as_str).ok_or_else(|| bad("id", "expected a string"))?;
                let options = v
                    .get("options")
                    .and_then(Value::as_array)
                    .and_then(|a| a.iter().map(floats).collect::<Option<Vec<_>>>())
                    .ok_or_else(|| bad("options", "expected arrays of numbers"))?;
                sidecar.titles.insert(id.to_string(), options);
            }
            _ => return Err(bad("kind", "expected meta, user or title")),
        }
    }
    Ok(sidecar)
}
