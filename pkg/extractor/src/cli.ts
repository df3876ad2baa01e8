#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { runExtract, verifyFiles } from "./extract";

yargs(hideBin(process.argv))
  .scriptName("lfsf-extractor")
  .command(
    "extract",
    "extract layered features for every recording in a metadata CSV",
    (y) =>
      y
        .option("audio-dir", { type: "string", demandOption: true, describe: "directory holding the WAV files" })
        .option("meta", { type: "string", demandOption: true, describe: "metadata CSV (file,patient_id,recording_id,language,label)" })
        .option("out", { type: "string", demandOption: true, describe: "output directory for .lfsf feature files" })
        .option("manifest", { type: "string", demandOption: true, describe: "path of the JSONL manifest to write" }),
    (argv) => {
      const summary = runExtract({
        audioDir: argv["audio-dir"] as string,
        metaPath: argv.meta as string,
        outDir: argv.out as string,
        manifestPath: argv.manifest as string,
      });
      console.log(
        `extracted ${summary.recordings} recording(s): ${summary.layers} layers x ${summary.dim} dims @ ${summary.fps} fps`,
      );
      console.log(`manifest: ${summary.manifestPath}`);
    },
  )
  .command(
    "verify <files..>",
    "check that feature files parse and are structurally sound",
    (y) => y.positional("files", { type: "string", array: true, demandOption: true }),
    (argv) => {
      const reports = verifyFiles(argv.files as string[]);
      let failed = 0;
      for (const report of reports) {
        if (report.ok) {
          console.log(`ok   ${report.path}  L=${report.layers} T=${report.frames} D=${report.dim} fps=${report.fps}`);
        } else {
          failed += 1;
          console.error(`FAIL ${report.path}  ${report.error}`);
        }
      }
      if (failed > 0) process.exit(1);
    },
  )
  .demandCommand(1)
  .strict()
  .fail((msg, err) => {
    console.error(`error: ${err ? err.message : msg}`);
    process.exit(1);
  })
  .parse();
