import fs from 'node:fs';
import { z } from 'zod';
import { SCHEMA_FIELDS, TASKS, Task } from './schemas.js';

const columnMap = z.record(z.string(), z.string());

const retrievalColumns = z
  .object({
    corpus: columnMap,
    queries: columnMap,
    qrels: columnMap,
  })
  .strict();

const mappingSchema = z
  .object({
    hub_dataset_id: z.string().optional(),
    task: z.enum(TASKS),
    dataset_id: z.string().min(1),
    source_lang: z.string().min(1),
    license: z.string().default('unknown'),
    // schema split name -> hub split name
    splits: z.record(z.string().min(1), z.string().min(1)),
    columns: z.union([columnMap, retrievalColumns]),
  })
  .strict();

export type BridgeMapping = z.infer<typeof mappingSchema>;
export type RetrievalColumns = z.infer<typeof retrievalColumns>;

// Fields the mapping may omit; they get synthesized defaults instead.
const OPTIONAL_WITH_DEFAULT: Record<string, Set<string>> = {
  classification: new Set(['id']),
  clustering: new Set(['id']),
  pair_classification: new Set(['id']),
  reranking: new Set(['id', 'negative']),
  sts: new Set(['id']),
};

const RETRIEVAL_OPTIONAL: Record<string, Set<string>> = {
  corpus: new Set(['title']),
  queries: new Set(),
  qrels: new Set(['score']),
};

const RETRIEVAL_FIELDS: Record<string, string[]> = {
  corpus: ['_id', 'title', 'text'],
  queries: ['_id', 'text'],
  qrels: ['query-id', 'corpus-id', 'score'],
};

/** Parse and cross-check a mapping file: every mandatory schema field of
 * the task must be covered. */
export function loadMapping(filePath: string): BridgeMapping {
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(filePath, 'utf-8'));
  } catch (err) {
    throw new Error(`${filePath}: unreadable mapping (${(err as Error).message})`);
  }
  const parsed = mappingSchema.safeParse(raw);
  if (!parsed.success) {
    const detail = parsed.error.issues
      .map((issue) => `${issue.path.join('.') || 'mapping'}: ${issue.message}`)
      .join('; ');
    throw new Error(`${filePath}: invalid mapping: ${detail}`);
  }
  const mapping = parsed.data;
  if (Object.keys(mapping.splits).length === 0) {
    throw new Error(`${filePath}: mapping must name at least one split`);
  }

  if (mapping.task === 'retrieval') {
    const columns = mapping.columns as Record<string, unknown>;
    for (const section of ['corpus', 'queries', 'qrels']) {
      if (!(section in columns)) {
        throw new Error(`${filePath}: retrieval mapping needs a columns.${section} section`);
      }
      const sectionMap = columns[section] as Record<string, string>;
      for (const field of RETRIEVAL_FIELDS[section]) {
        if (!(field in sectionMap) && !RETRIEVAL_OPTIONAL[section].has(field)) {
          throw new Error(
            `${filePath}: mapping does not cover mandatory field ${section}.${field}`,
          );
        }
      }
    }
    return mapping;
  }

  if ('corpus' in (mapping.columns as object)) {
    throw new Error(`${filePath}: sectioned columns are only valid for retrieval`);
  }
  const columns = mapping.columns as Record<string, string>;
  const task = mapping.task as Exclude<Task, 'retrieval'>;
  for (const field of SCHEMA_FIELDS[task]) {
    if (!(field in columns) && !OPTIONAL_WITH_DEFAULT[task].has(field)) {
      throw new Error(`${filePath}: mapping does not cover mandatory field ${field}`);
    }
  }
  return mapping;
}
