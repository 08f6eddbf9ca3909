import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    globalSetup: "./tests/globalSetup.ts",
    testTimeout: 60_000,
    hookTimeout: 180_000,
  },
});
