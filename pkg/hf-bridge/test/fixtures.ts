import fs from 'node:fs';
import path from 'node:path';
import { BridgeMapping } from '../src/mapping.js';
import { writeJsonl, writeTsv } from '../src/jsonl.js';
import { QRELS_HEADER, Task } from '../src/schemas.js';

/** One hub-layout fixture per task, with hub column names that differ from
 * the schema field names so the mapping actually does work. */
export interface HubFixture {
  mapping: BridgeMapping;
  write: (hubDir: string) => void;
}

const base = (task: Task, columns: BridgeMapping['columns']): BridgeMapping => ({
  task,
  dataset_id: `${task}-fixture`,
  source_lang: 'eng_Latn',
  license: 'cc-by-4.0',
  splits: { test: 'validation' },
  columns,
});

export const FIXTURES: Record<Task, HubFixture> = {
  classification: {
    mapping: base('classification', { id: 'guid', text: 'sentence', label: 'category' }),
    write: (hubDir) =>
      writeJsonl(
        path.join(hubDir, 'data', 'validation.jsonl'),
        [0, 1, 2, 3].map((i) => ({ guid: `g${i}`, sentence: `hub sample ${i}`, category: i % 2 })),
      ),
  },
  sts: {
    mapping: base('sts', { id: 'pair_id', sentence1: 'sent1', sentence2: 'sent2', score: 'similarity' }),
    write: (hubDir) =>
      writeJsonl(
        path.join(hubDir, 'data', 'validation.jsonl'),
        [0, 1, 2].map((i) => ({
          pair_id: `p${i}`,
          sent1: `left sentence ${i}`,
          sent2: `right sentence ${i}`,
          similarity: i * 1.5,
        })),
      ),
  },
  pair_classification: {
    mapping: base('pair_classification', {
      id: 'pid',
      sentence1: 'premise',
      sentence2: 'hypothesis',
      label: 'gold',
    }),
    write: (hubDir) =>
      writeJsonl(
        path.join(hubDir, 'data', 'validation.jsonl'),
        [0, 1, 2].map((i) => ({
          pid: `x${i}`,
          premise: `premise ${i}`,
          hypothesis: `hypothesis ${i}`,
          gold: i % 2,
        })),
      ),
  },
  clustering: {
    mapping: base('clustering', { id: 'cid', sentences: 'items', labels: 'item_labels' }),
    write: (hubDir) =>
      writeJsonl(
        path.join(hubDir, 'data', 'validation.jsonl'),
        [0, 1].map((i) => ({
          cid: `c${i}`,
          items: [`item ${i}-0`, `item ${i}-1`, `item ${i}-2`],
          item_labels: [0, 1, 0],
        })),
      ),
  },
  reranking: {
    mapping: base('reranking', {
      id: 'qid',
      query: 'question',
      positive: 'relevant',
      negative: 'irrelevant',
    }),
    write: (hubDir) =>
      writeJsonl(
        path.join(hubDir, 'data', 'validation.jsonl'),
        [0, 1].map((i) => ({
          qid: `q${i}`,
          question: `question ${i}`,
          relevant: [`good ${i}-0`, `good ${i}-1`],
          irrelevant: [`bad ${i}-0`],
        })),
      ),
  },
  retrieval: {
    mapping: base('retrieval', {
      corpus: { _id: 'docid', title: 'heading', text: 'body' },
      queries: { _id: 'qid', text: 'question' },
      qrels: { 'query-id': 'qid', 'corpus-id': 'docid', score: 'relevance' },
    }),
    write: (hubDir) => {
      writeJsonl(
        path.join(hubDir, 'corpus.jsonl'),
        [0, 1, 2].map((i) => ({ docid: `d${i}`, heading: `heading ${i}`, body: `body text ${i}` })),
      );
      writeJsonl(
        path.join(hubDir, 'queries.jsonl'),
        [0, 1].map((i) => ({ qid: `q${i}`, question: `hub question ${i}` })),
      );
      writeJsonl(path.join(hubDir, 'qrels', 'validation.jsonl'), [
        { qid: 'q0', docid: 'd0', relevance: 1 },
        { qid: 'q1', docid: 'd2', relevance: 2 },
      ]);
    },
  },
};

/** Write pipeline-schema fixture files directly (the import direction's input). */
export function writeSchemaFixture(task: Task, outDir: string): string {
  fs.mkdirSync(outDir, { recursive: true });
  const manifest = {
    dataset_id: `${task}-schema-fixture`,
    task,
    source_lang: 'eng_Latn',
    license: 'cc-by-4.0',
    splits: ['test'],
  };
  if (task === 'retrieval') {
    writeJsonl(
      path.join(outDir, 'corpus.jsonl'),
      [0, 1].map((i) => ({ _id: `d${i}`, title: `title ${i}`, text: `text ${i}` })),
    );
    writeJsonl(path.join(outDir, 'queries.jsonl'), [{ _id: 'q0', text: 'schema question' }]);
    writeTsv(path.join(outDir, 'qrels', 'test.tsv'), QRELS_HEADER, [['q0', 'd1', '1']]);
  } else {
    const rows: Record<string, unknown>[] = [];
    for (const i of [0, 1, 2]) {
      if (task === 'classification') rows.push({ id: `r${i}`, text: `schema text ${i}`, label: i % 2 });
      if (task === 'sts')
        rows.push({ id: `r${i}`, sentence1: `s1 ${i}`, sentence2: `s2 ${i}`, score: i });
      if (task === 'pair_classification')
        rows.push({ id: `r${i}`, sentence1: `s1 ${i}`, sentence2: `s2 ${i}`, label: i % 2 });
      if (task === 'clustering')
        rows.push({ id: `r${i}`, sentences: [`a ${i}`, `b ${i}`], labels: [0, 1] });
      if (task === 'reranking')
        rows.push({ id: `r${i}`, query: `q ${i}`, positive: [`p ${i}`], negative: [`n ${i}`] });
    }
    writeJsonl(path.join(outDir, 'test.jsonl'), rows);
  }
  const manifestPath = path.join(outDir, 'manifest.json');
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n', 'utf-8');
  return manifestPath;
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeys);
  if (value && typeof value === 'object') {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as object).sort()) {
      out[key] = sortKeys((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}

/** Order-insensitive record multiset fingerprint. */
export function multiset(rows: Record<string, unknown>[]): string[] {
  return rows.map((row) => JSON.stringify(sortKeys(row))).sort();
}
