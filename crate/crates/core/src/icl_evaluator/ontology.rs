use std::fmt::Write as _;

use crate::schema::{Schema, SlotKind, SlotRole};

pub const DEFAULT_VALUE_SAMPLE: usize = 5;

/// One `CREATE TABLE` block per domain over its informable slots. Closed
/// slots list at most `max_values` of their values, in schema order.
pub fn build_ontology_description(schema: &Schema, max_values: usize) -> String {
    let mut out = String::new();
    for (i, domain) in schema.domains.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "CREATE TABLE {}(", domain.name);
        let slots: Vec<_> = domain.slots_with_role(SlotRole::Informable).collect();
        for (j, slot) in slots.iter().enumerate() {
            let column = match slot.kind {
                SlotKind::Categorical | SlotKind::Boolean => {
                    let shown: Vec<String> = slot.values.iter().take(max_values).map(|v| format!("'{v}'")).collect();
                    format!("  {} text CHECK ({} IN ({}))", slot.name, slot.name, shown.join(", "))
                }
                SlotKind::Time => format!("  {} text -- HH:MM", slot.name),
                SlotKind::Open => format!("  {} text", slot.name),
            };
            let sep = if j + 1 < slots.len() { "," } else { "" };
            let _ = writeln!(out, "{column}{sep}");
        }
        out.push_str(")\n");
    }
    out
}
