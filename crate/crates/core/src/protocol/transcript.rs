use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
        })
    }
}

/// One message: `width` bits of `value`, most significant bit first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Side,
    pub value: u64,
    pub width: u32,
    pub label: String,
}

impl Message {
    pub fn bit_string(&self) -> String {
        (0..self.width)
            .rev()
            .map(|i| if self.value >> i & 1 == 1 { '1' } else { '0' })
            .collect()
    }
}

/// Ordered message log. A counting transcript keeps only the bit total.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Transcript {
    messages: Vec<Message>,
    total_bits: u64,
    counting_only: bool,
}

impl Transcript {
    pub fn new() -> Transcript {
        Transcript::default()
    }

    pub fn counting() -> Transcript {
        Transcript {
            counting_only: true,
            ..Transcript::default()
        }
    }

    pub fn push(&mut self, speaker: Side, value: u64, width: u32, label: &str) {
        debug_assert!(
            width == 64 || value >> width == 0,
            "value does not fit the message width"
        );
        self.total_bits += width as u64;
        if !self.counting_only {
            self.messages.push(Message {
                speaker,
                value,
                width,
                label: label.to_string(),
            });
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    pub fn by(&self, speaker: Side) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(move |m| m.speaker == speaker)
    }

    /// `speaker<TAB>bits<TAB>label`, one line per message.
    pub fn dump(&self) -> String {
        self.messages
            .iter()
            .map(|m| format!("{}\t{}\t{}\n", m.speaker, m.bit_string(), m.label))
            .collect()
    }
}
