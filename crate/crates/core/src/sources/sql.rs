//! Structured source: one SQLite table queried through model-written SQL.
//!
//! The model sees only the schema card and must answer with one SELECT.
//! Anything else is refused before it reaches the database, and the
//! connection itself is opened read-only.

use super::{Passage, RetrieveContext, Retriever, SourceError, SourceKind};
use crate::ledger::Stage;
use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use sqlparser::ast::Statement;
use sqlparser::dialect::SQLiteDialect;
use sqlparser::parser::Parser;
use std::path::Path;
use std::sync::Mutex;

pub const DEFAULT_ROW_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlColumn {
    pub name: String,
    #[serde(rename = "type", default)]
    pub type_tag: String,
    #[serde(default)]
    pub description: String,
}

/// What the model is told about the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlSchemaCard {
    pub table: String,
    pub columns: Vec<SqlColumn>,
}

/// Pulls the statement out of a model reply: drops code fences and one trailing semicolon.
pub fn extract_sql(reply: &str) -> String {
    let mut text = reply.trim();
    if let Some(rest) = text.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
        text = rest.rsplit_once("```").map(|(body, _)| body).unwrap_or(rest);
    }
    let text = text.trim();
    text.strip_suffix(';').unwrap_or(text).trim().to_string()
}

/// Accepts exactly one read-only query statement.
pub fn classify_statement(sql: &str) -> Result<(), SourceError> {
    let statements = Parser::parse_sql(&SQLiteDialect {}, sql).map_err(|e| SourceError::SqlGuard(format!("unparseable SQL: {e}")))?;
    match statements.as_slice() {
        [Statement::Query(_)] => Ok(()),
        [] => Err(SourceError::SqlGuard("no statement".into())),
        [_] => Err(SourceError::SqlGuard(format!("not a SELECT: {sql}"))),
        _ => Err(SourceError::SqlGuard(format!("{} statements; only one is allowed", statements.len()))),
    }
}

pub struct SqlTable {
    conn: Mutex<Connection>,
    schema: SqlSchemaCard,
    row_limit: usize,
    executed: Mutex<Vec<String>>,
}

fn render_value(v: ValueRef<'_>) -> String {
    match v {
        ValueRef::Null => "NULL".to_string(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(f) => f.to_string(),
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
        ValueRef::Blob(b) => format!("<blob {} bytes>", b.len()),
    }
}

fn is_identifier(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl SqlTable {
    /// Opens `path` read-only. Without an explicit schema card the columns are read from the table.
    pub fn open(path: &Path, table: &str, schema: Option<SqlSchemaCard>, row_limit: usize) -> Result<Self, SourceError> {
        let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
            .map_err(|e| SourceError::Ingestion {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Self::from_connection(conn, table, schema, row_limit)
    }

    pub fn from_connection(
        conn: Connection,
        table: &str,
        schema: Option<SqlSchemaCard>,
        row_limit: usize,
    ) -> Result<Self, SourceError> {
        if !is_identifier(table) {
            return Err(SourceError::Config(format!("invalid table name {table:?}")));
        }
        let introspected = {
            let mut stmt = conn
                .prepare(&format!("PRAGMA table_info({table})"))
                .map_err(|e| SourceError::Backend(e.to_string()))?;
            let cols = stmt
                .query_map([], |row| {
                    Ok(SqlColumn {
                        name: row.get(1)?,
                        type_tag: row.get(2)?,
                        description: String::new(),
                    })
                })
                .map_err(|e| SourceError::Backend(e.to_string()))?
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SourceError::Backend(e.to_string()))?;
            cols
        };
        if introspected.is_empty() {
            return Err(SourceError::Config(format!("table {table:?} does not exist or has no columns")));
        }
        let schema = match schema {
            Some(card) if card.columns.is_empty() => {
                return Err(SourceError::Config("schema card needs at least one column".into()))
            }
            Some(card) => card,
            None => SqlSchemaCard {
                table: table.to_string(),
                columns: introspected,
            },
        };
        Ok(Self {
            conn: Mutex::new(conn),
            schema,
            row_limit: row_limit.max(1),
            executed: Mutex::new(Vec::new()),
        })
    }

    pub fn schema(&self) -> &SqlSchemaCard {
        &self.schema
    }

    /// Every statement sent to the database so far.
    pub fn executed_statements(&self) -> Vec<String> {
        self.executed.lock().unwrap().clone()
    }

    /// Runs a guarded SELECT and renders rows as `col=value` lines.
    pub fn run_select(&self, sql: &str) -> Result<Vec<String>, SourceError> {
        classify_statement(sql)?;
        let wrapped = format!("SELECT * FROM ({sql}) LIMIT {}", self.row_limit);
        classify_statement(&wrapped)?;
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(&wrapped).map_err(|e| SourceError::Backend(e.to_string()))?;
        if !stmt.readonly() {
            return Err(SourceError::SqlGuard("statement is not read-only".into()));
        }
        self.executed.lock().unwrap().push(wrapped.clone());
        let names: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
        let mut rows = stmt.query([]).map_err(|e| SourceError::Backend(e.to_string()))?;
        let mut lines = Vec::new();
        while let Some(row) = rows.next().map_err(|e| SourceError::Backend(e.to_string()))? {
            let mut cells = Vec::with_capacity(names.len());
            for (i, name) in names.iter().enumerate() {
                let v = row.get_ref(i).map_err(|e| SourceError::Backend(e.to_string()))?;
                cells.push(format!("{name}={}", render_value(v)));
            }
            lines.push(cells.join("; "));
        }
        Ok(lines)
    }
}

impl Retriever for SqlTable {
    fn kind(&self) -> SourceKind {
        SourceKind::SqlTable
    }

    fn retrieve(&self, query: &str, _top_k: usize, ctx: &mut RetrieveContext<'_>) -> Result<Vec<Passage>, SourceError> {
        let prompt = ctx.prompts.sql_prompt(&self.schema, query);
        let reply = ctx.llm.call(Stage::Retrieval, &prompt)?;
        let sql = extract_sql(&reply);
        let rows = self.run_select(&sql)?;
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![Passage {
            id: format!("{}:rows", self.schema.table),
            title: self.schema.table.clone(),
            text: rows.join("\n"),
            score: 1.0,
        }])
    }
}

/// Free-function form: one translation call, then a guarded SELECT.
pub fn sql_retrieve(table: &SqlTable, subquery: &str, ctx: &mut RetrieveContext<'_>) -> Result<Vec<Passage>, SourceError> {
    table.retrieve(subquery, 1, ctx)
}
