import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the end-to-end tests train several small nets and shell out to the
    // analysis CLI, so the default 5 s per test is not enough
    testTimeout: 300_000,
    hookTimeout: 60_000,
  },
});
