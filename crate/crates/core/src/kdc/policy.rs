use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Allow,
    Deny,
}

impl Verdict {
    fn flip(self) -> Self {
        match self {
            Verdict::Allow => Verdict::Deny,
            Verdict::Deny => Verdict::Allow,
        }
    }
}

/// A request to open a stream, phrased from the requester's side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Access<'a> {
    /// `reader` asks to read from `source`: data flows `source -> reader`.
    Read { reader: &'a str, source: &'a str },
    /// `writer` asks to write to `target`: data flows `writer -> target`.
    Write { writer: &'a str, target: &'a str },
}

impl<'a> Access<'a> {
    /// The directed pair `(sender, receiver)` whose key protects the stream.
    pub fn directed_pair(&self) -> (&'a str, &'a str) {
        match *self {
            Access::Read { reader, source } => (source, reader),
            Access::Write { writer, target } => (writer, target),
        }
    }
}

/// Directed allow/deny relation: a default rule plus ordered-pair exceptions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyMatrix {
    #[serde(rename = "default")]
    default_rule: Verdict,
    exceptions: BTreeSet<(String, String)>,
}

impl Default for PolicyMatrix {
    fn default() -> Self {
        PolicyMatrix::new(Verdict::Allow)
    }
}

impl PolicyMatrix {
    pub fn new(default_rule: Verdict) -> Self {
        PolicyMatrix {
            default_rule,
            exceptions: BTreeSet::new(),
        }
    }

    pub fn default_rule(&self) -> Verdict {
        self.default_rule
    }

    pub fn exceptions(&self) -> impl Iterator<Item = (&str, &str)> {
        self.exceptions
            .iter()
            .map(|(s, r)| (s.as_str(), r.as_str()))
    }

    /// Pins the verdict for `sender -> receiver`. Only the given orientation
    /// changes; the reverse stream keeps its own verdict.
    pub fn set(&mut self, sender: &str, receiver: &str, verdict: Verdict) -> Result<()> {
        if sender == receiver {
            return Err(Error::SelfChannel);
        }
        let key = (sender.to_string(), receiver.to_string());
        if verdict == self.default_rule {
            self.exceptions.remove(&key);
        } else {
            self.exceptions.insert(key);
        }
        Ok(())
    }

    /// Replaces the default rule and drops all exceptions.
    pub fn set_default(&mut self, default_rule: Verdict) {
        self.exceptions.clear();
        self.default_rule = default_rule;
    }

    pub fn verdict(&self, sender: &str, receiver: &str) -> Verdict {
        let key = (sender.to_string(), receiver.to_string());
        if self.exceptions.contains(&key) {
            self.default_rule.flip()
        } else {
            self.default_rule
        }
    }

    pub fn verdict_for(&self, access: &Access<'_>) -> Verdict {
        let (s, r) = access.directed_pair();
        self.verdict(s, r)
    }
}
