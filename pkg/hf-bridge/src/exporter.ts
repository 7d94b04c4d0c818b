import fs from 'node:fs';
import path from 'node:path';
import { BridgeMapping, RetrievalColumns } from './mapping.js';
import { readJsonl, writeJsonl, writeTsv } from './jsonl.js';
import { QRELS_HEADER, SCHEMA_FIELDS, Task, corpusSchema, querySchema, validateRecord } from './schemas.js';

/** Locate a hub split file: data/<split>.jsonl preferred, <split>.jsonl accepted. */
export function hubSplitFile(hubDir: string, hubSplit: string): string {
  const candidates = [
    path.join(hubDir, 'data', `${hubSplit}.jsonl`),
    path.join(hubDir, `${hubSplit}.jsonl`),
  ];
  for (const candidate of candidates) {
    if (fs.existsSync(candidate)) return candidate;
  }
  throw new Error(`${hubDir}: no data file for hub split '${hubSplit}' (tried ${candidates.join(', ')})`);
}

function mapRow(
  row: Record<string, unknown>,
  columns: Record<string, string>,
  fields: string[],
  defaults: Record<string, (index: number) => unknown>,
  where: string,
  index: number,
): Record<string, unknown> {
  const out: Record<string, unknown> = {};
  for (const field of fields) {
    const column = columns[field];
    if (column !== undefined) {
      if (!(column in row)) {
        throw new Error(`${where}: hub column '${column}' (mapped to ${field}) is missing`);
      }
      out[field] = row[column];
    } else if (field in defaults) {
      out[field] = defaults[field](index);
    }
  }
  return out;
}

function exportFlat(mapping: BridgeMapping, hubDir: string, outDir: string): void {
  const task = mapping.task as Exclude<Task, 'retrieval'>;
  const columns = mapping.columns as Record<string, string>;
  const defaults: Record<string, (index: number) => unknown> = {
    id: (index) => String(index),
    negative: () => [],
  };
  for (const [schemaSplit, hubSplit] of Object.entries(mapping.splits)) {
    const sourceFile = hubSplitFile(hubDir, hubSplit);
    const rows = readJsonl(sourceFile);
    const records = rows.map((row, i) => {
      const mapped = mapRow(row, columns, SCHEMA_FIELDS[task], defaults, `${sourceFile}:${i + 1}`, i);
      return validateRecord(task, mapped, `${sourceFile}:${i + 1}`);
    });
    // canonical field order for byte-stable output
    const ordered = records.map((r) => {
      const out: Record<string, unknown> = {};
      for (const field of SCHEMA_FIELDS[task]) out[field] = r[field];
      return out;
    });
    writeJsonl(path.join(outDir, `${schemaSplit}.jsonl`), ordered);
  }
}

function exportRetrieval(mapping: BridgeMapping, hubDir: string, outDir: string): void {
  const columns = mapping.columns as RetrievalColumns;

  const corpusFile = path.join(hubDir, 'corpus.jsonl');
  const corpusIds = new Set<string>();
  const corpusRows = readJsonl(corpusFile).map((row, i) => {
    const mapped = mapRow(
      row,
      columns.corpus,
      ['_id', 'title', 'text'],
      { title: () => '' },
      `${corpusFile}:${i + 1}`,
      i,
    );
    const checked = corpusSchema.safeParse(mapped);
    if (!checked.success) {
      throw new Error(`${corpusFile}:${i + 1}: ${checked.error.issues[0].message}`);
    }
    corpusIds.add(String(mapped._id));
    return { _id: mapped._id, title: mapped.title, text: mapped.text };
  });
  writeJsonl(path.join(outDir, 'corpus.jsonl'), corpusRows);

  const queriesFile = path.join(hubDir, 'queries.jsonl');
  const queryIds = new Set<string>();
  const queryRows = readJsonl(queriesFile).map((row, i) => {
    const mapped = mapRow(row, columns.queries, ['_id', 'text'], {}, `${queriesFile}:${i + 1}`, i);
    const checked = querySchema.safeParse(mapped);
    if (!checked.success) {
      throw new Error(`${queriesFile}:${i + 1}: ${checked.error.issues[0].message}`);
    }
    queryIds.add(String(mapped._id));
    return { _id: mapped._id, text: mapped.text };
  });
  writeJsonl(path.join(outDir, 'queries.jsonl'), queryRows);

  for (const [schemaSplit, hubSplit] of Object.entries(mapping.splits)) {
    const qrelsFile = path.join(hubDir, 'qrels', `${hubSplit}.jsonl`);
    const rows: string[][] = [];
    readJsonl(qrelsFile).forEach((row, i) => {
      const mapped = mapRow(
        row,
        columns.qrels,
        QRELS_HEADER,
        { score: () => 1 },
        `${qrelsFile}:${i + 1}`,
        i,
      );
      const qid = String(mapped['query-id']);
      const did = String(mapped['corpus-id']);
      const score = Number(mapped.score);
      if (!Number.isInteger(score)) {
        throw new Error(`${qrelsFile}:${i + 1}: score ${String(mapped.score)} is not an integer`);
      }
      if (!queryIds.has(qid)) {
        throw new Error(`${qrelsFile}:${i + 1}: query-id '${qid}' not present in queries`);
      }
      if (!corpusIds.has(did)) {
        throw new Error(`${qrelsFile}:${i + 1}: corpus-id '${did}' not present in corpus`);
      }
      rows.push([qid, did, String(score)]);
    });
    writeTsv(path.join(outDir, 'qrels', `${schemaSplit}.tsv`), QRELS_HEADER, rows);
  }
}

/**
 * Convert a hub-layout dataset directory into the pipeline's schema files.
 * Returns the path of the written manifest; the output passes the primary
 * component's dataset validation.
 */
export function exportToSchemas(mapping: BridgeMapping, hubDir: string, outDir: string): string {
  if (!fs.existsSync(hubDir)) {
    throw new Error(`${hubDir}: hub dataset directory not found`);
  }
  fs.mkdirSync(outDir, { recursive: true });
  if (mapping.task === 'retrieval') {
    exportRetrieval(mapping, hubDir, outDir);
  } else {
    exportFlat(mapping, hubDir, outDir);
  }
  const manifest = {
    dataset_id: mapping.dataset_id,
    task: mapping.task,
    source_lang: mapping.source_lang,
    license: mapping.license,
    splits: Object.keys(mapping.splits),
  };
  const manifestPath = path.join(outDir, 'manifest.json');
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n', 'utf-8');
  return manifestPath;
}
