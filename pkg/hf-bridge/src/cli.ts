#!/usr/bin/env node
import { pathToFileURL } from 'node:url';
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { loadMapping } from './mapping.js';
import { exportToSchemas } from './exporter.js';
import { importFromSchemas } from './importer.js';

export async function main(argv: string[]): Promise<number> {
  try {
    await yargs(argv)
      .scriptName('hf-bridge')
      .command(
        'export',
        'convert a hub-layout dataset directory into pipeline schema files',
        (cmd) =>
          cmd
            .option('mapping', { type: 'string', demandOption: true, describe: 'mapping JSON file' })
            .option('hub-dir', { type: 'string', demandOption: true, describe: 'hub dataset directory' })
            .option('out', { type: 'string', demandOption: true, describe: 'output directory' }),
        (args) => {
          const mapping = loadMapping(args.mapping);
          const manifestPath = exportToSchemas(mapping, args['hub-dir'], args.out);
          console.log(`wrote ${manifestPath}`);
        },
      )
      .command(
        'import',
        'convert pipeline schema files into a hub-ready dataset directory',
        (cmd) =>
          cmd
            .option('mapping', { type: 'string', demandOption: true, describe: 'mapping JSON file' })
            .option('manifest', { type: 'string', demandOption: true, describe: 'pipeline manifest.json' })
            .option('out', { type: 'string', demandOption: true, describe: 'output directory' }),
        (args) => {
          const mapping = loadMapping(args.mapping);
          importFromSchemas(mapping, args.manifest, args.out);
          console.log(`wrote hub dataset to ${args.out}`);
        },
      )
      .demandCommand(1)
      .strict()
      .exitProcess(false)
      .fail((msg, err) => {
        throw err ?? new Error(msg);
      })
      .parseAsync();
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
