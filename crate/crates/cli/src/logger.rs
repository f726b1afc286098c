//! Logger that echoes warnings to stderr and keeps every record for run.log.

use std::sync::Mutex;

use log::{Level, LevelFilter, Log, Metadata, Record};

pub struct RunLog {
    lines: Mutex<Vec<String>>,
    echo: Level,
}

static LOGGER: RunLog = RunLog {
    lines: Mutex::new(Vec::new()),
    echo: Level::Warn,
};

impl Log for RunLog {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Info
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = format!("{:<5} {}", record.level(), record.args());
        if record.level() <= self.echo {
            eprintln!("{line}");
        }
        self.lines
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(line);
    }

    fn flush(&self) {}
}

pub fn install() {
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(LevelFilter::Info);
    }
}

/// Everything logged so far, one record per line.
pub fn contents() -> String {
    let lines = LOGGER.lines.lock().unwrap_or_else(|e| e.into_inner());
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}
