import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // The e2e spec launches a real server process and replays a full match.
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
});
