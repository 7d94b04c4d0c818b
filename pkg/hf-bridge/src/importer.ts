import fs from 'node:fs';
import path from 'node:path';
import { BridgeMapping, RetrievalColumns } from './mapping.js';
import { readJsonl, readTsv, writeJsonl } from './jsonl.js';
import {
  Manifest,
  SCHEMA_FIELDS,
  Task,
  corpusSchema,
  manifestSchema,
  querySchema,
  validateRecord,
} from './schemas.js';

function loadManifest(manifestPath: string): Manifest {
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'));
  } catch (err) {
    throw new Error(`${manifestPath}: unreadable manifest (${(err as Error).message})`);
  }
  const parsed = manifestSchema.safeParse(raw);
  if (!parsed.success) {
    throw new Error(`${manifestPath}: invalid manifest: ${parsed.error.issues[0].message}`);
  }
  return parsed.data;
}

function hubReadme(mapping: BridgeMapping, dataFiles: { split: string; path: string }[]): string {
  const lines = ['---', 'configs:', '- config_name: default', '  data_files:'];
  for (const file of dataFiles) {
    lines.push(`  - split: ${file.split}`);
    lines.push(`    path: ${file.path}`);
  }
  lines.push('---', '', `# ${mapping.hub_dataset_id ?? mapping.dataset_id}`, '');
  lines.push(`Task: ${mapping.task}. Exported from the pipeline schema files.`);
  return lines.join('\n') + '\n';
}

/**
 * Convert pipeline schema files into a hub-ready dataset directory.
 * All splits are validated before anything is written; hub split names come
 * from the mapping so they are preserved across a round trip.
 */
export function importFromSchemas(mapping: BridgeMapping, manifestPath: string, outDir: string): void {
  const manifest = loadManifest(manifestPath);
  if (manifest.task !== mapping.task) {
    throw new Error(
      `${manifestPath}: manifest task '${manifest.task}' does not match mapping task '${mapping.task}'`,
    );
  }
  const root = path.dirname(manifestPath);
  for (const schemaSplit of Object.keys(mapping.splits)) {
    if (!manifest.splits.includes(schemaSplit)) {
      throw new Error(`${manifestPath}: manifest has no split '${schemaSplit}' named by the mapping`);
    }
  }

  if (mapping.task === 'retrieval') {
    importRetrieval(mapping, root, outDir);
    return;
  }

  const task = mapping.task as Exclude<Task, 'retrieval'>;
  const columns = mapping.columns as Record<string, string>;
  // validate everything up front: a schema violation aborts before writing
  const validated: { schemaSplit: string; hubSplit: string; rows: Record<string, unknown>[] }[] = [];
  for (const [schemaSplit, hubSplit] of Object.entries(mapping.splits)) {
    const splitFile = path.join(root, `${schemaSplit}.jsonl`);
    const records = readJsonl(splitFile).map((row, i) =>
      validateRecord(task, row, `${splitFile}:${i + 1}`),
    );
    const rows = records.map((record) => {
      const hubRow: Record<string, unknown> = {};
      for (const field of SCHEMA_FIELDS[task]) {
        const column = columns[field];
        if (column !== undefined) hubRow[column] = record[field];
      }
      return hubRow;
    });
    validated.push({ schemaSplit, hubSplit, rows });
  }

  fs.mkdirSync(outDir, { recursive: true });
  const dataFiles: { split: string; path: string }[] = [];
  for (const { hubSplit, rows } of validated) {
    const rel = path.join('data', `${hubSplit}.jsonl`);
    writeJsonl(path.join(outDir, rel), rows);
    dataFiles.push({ split: hubSplit, path: rel });
  }
  fs.writeFileSync(path.join(outDir, 'README.md'), hubReadme(mapping, dataFiles), 'utf-8');
}

function importRetrieval(mapping: BridgeMapping, root: string, outDir: string): void {
  const columns = mapping.columns as RetrievalColumns;

  const corpusFile = path.join(root, 'corpus.jsonl');
  const corpus = readJsonl(corpusFile).map((row, i) => {
    const checked = corpusSchema.safeParse(row);
    if (!checked.success) {
      throw new Error(`${corpusFile}:${i + 1}: ${checked.error.issues[0].message}`);
    }
    return checked.data;
  });
  const queriesFile = path.join(root, 'queries.jsonl');
  const queries = readJsonl(queriesFile).map((row, i) => {
    const checked = querySchema.safeParse(row);
    if (!checked.success) {
      throw new Error(`${queriesFile}:${i + 1}: ${checked.error.issues[0].message}`);
    }
    return checked.data;
  });
  const qrelsBySplit: { hubSplit: string; rows: Record<string, string>[] }[] = [];
  for (const [schemaSplit, hubSplit] of Object.entries(mapping.splits)) {
    const qrelsFile = path.join(root, 'qrels', `${schemaSplit}.tsv`);
    qrelsBySplit.push({ hubSplit, rows: readTsv(qrelsFile) });
  }

  const remap = (row: Record<string, unknown>, sectionColumns: Record<string, string>) => {
    const out: Record<string, unknown> = {};
    for (const [field, column] of Object.entries(sectionColumns)) {
      if (field in row) out[column] = row[field];
    }
    return out;
  };

  writeJsonl(path.join(outDir, 'corpus.jsonl'), corpus.map((row) => remap(row, columns.corpus)));
  writeJsonl(path.join(outDir, 'queries.jsonl'), queries.map((row) => remap(row, columns.queries)));
  for (const { hubSplit, rows } of qrelsBySplit) {
    writeJsonl(
      path.join(outDir, 'qrels', `${hubSplit}.jsonl`),
      rows.map((row) => {
        const out = remap(row, columns.qrels);
        const scoreColumn = columns.qrels['score'];
        if (scoreColumn !== undefined && scoreColumn in out) {
          out[scoreColumn] = Number(out[scoreColumn]);
        }
        return out;
      }),
    );
  }
  fs.writeFileSync(
    path.join(outDir, 'README.md'),
    hubReadme(
      mapping,
      qrelsBySplit.map(({ hubSplit }) => ({ split: hubSplit, path: path.join('qrels', `${hubSplit}.jsonl`) })),
    ),
    'utf-8',
  );
}
