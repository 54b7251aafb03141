//! Default knowledge base. Later rows override earlier ones, so overload
//! exemptions follow the family rows they carve out of.

use super::{CalleeClass, Category};

use CalleeClass::{Neutral, Sink};
use Category::*;

const fn mm(c: Category) -> CalleeClass {
    CalleeClass::MustMock(c)
}

pub(super) const ENTRIES: &[(&str, &str, &str, CalleeClass)] = &[
    // Time
    ("java.time.*", "now", "*", mm(Time)),
    ("java.time.Instant", "now", "(Ljava/time/Clock;)Ljava/time/Instant;", Neutral),
    ("java.time.LocalDate", "now", "(Ljava/time/Clock;)Ljava/time/LocalDate;", Neutral),
    ("java.time.LocalTime", "now", "(Ljava/time/Clock;)Ljava/time/LocalTime;", Neutral),
    ("java.time.LocalDateTime", "now", "(Ljava/time/Clock;)Ljava/time/LocalDateTime;", Neutral),
    ("java.time.OffsetDateTime", "now", "(Ljava/time/Clock;)Ljava/time/OffsetDateTime;", Neutral),
    ("java.time.OffsetTime", "now", "(Ljava/time/Clock;)Ljava/time/OffsetTime;", Neutral),
    ("java.time.ZonedDateTime", "now", "(Ljava/time/Clock;)Ljava/time/ZonedDateTime;", Neutral),
    ("java.time.Year", "now", "(Ljava/time/Clock;)Ljava/time/Year;", Neutral),
    ("java.time.YearMonth", "now", "(Ljava/time/Clock;)Ljava/time/YearMonth;", Neutral),
    ("java.time.MonthDay", "now", "(Ljava/time/Clock;)Ljava/time/MonthDay;", Neutral),
    ("java.lang.System", "currentTimeMillis", "()J", mm(Time)),
    ("java.lang.System", "nanoTime", "()J", mm(Time)),
    ("java.time.Clock", "systemUTC", "*", mm(Time)),
    ("java.time.Clock", "systemDefaultZone", "*", mm(Time)),
    ("java.time.Clock", "system", "*", mm(Time)),
    ("java.util.Date", "<init>", "()V", mm(Time)),
    ("java.util.Calendar", "getInstance", "*", mm(Time)),
    // Random
    ("java.util.Random", "<init>", "()V", mm(Random)),
    ("java.lang.Math", "random", "()D", mm(Random)),
    ("java.lang.StrictMath", "random", "()D", mm(Random)),
    ("java.security.SecureRandom", "<init>", "*", mm(Random)),
    ("java.util.concurrent.ThreadLocalRandom", "current", "*", mm(Random)),
    ("java.util.UUID", "randomUUID", "*", mm(Random)),
    // FileSystem
    ("java.nio.file.Files", "*", "*", mm(FileSystem)),
    ("java.io.FileInputStream", "<init>", "*", mm(FileSystem)),
    ("java.io.FileOutputStream", "<init>", "*", mm(FileSystem)),
    ("java.io.FileReader", "<init>", "*", mm(FileSystem)),
    ("java.io.FileWriter", "<init>", "*", mm(FileSystem)),
    ("java.io.RandomAccessFile", "<init>", "*", mm(FileSystem)),
    ("java.io.File", "exists", "*", mm(FileSystem)),
    ("java.io.File", "isFile", "*", mm(FileSystem)),
    ("java.io.File", "isDirectory", "*", mm(FileSystem)),
    ("java.io.File", "createNewFile", "*", mm(FileSystem)),
    ("java.io.File", "delete", "*", mm(FileSystem)),
    ("java.io.File", "mkdir", "*", mm(FileSystem)),
    ("java.io.File", "mkdirs", "*", mm(FileSystem)),
    ("java.io.File", "list", "*", mm(FileSystem)),
    ("java.io.File", "listFiles", "*", mm(FileSystem)),
    ("java.io.File", "length", "*", mm(FileSystem)),
    ("java.io.File", "lastModified", "*", mm(FileSystem)),
    ("java.io.File", "renameTo", "*", mm(FileSystem)),
    ("java.io.File", "canRead", "*", mm(FileSystem)),
    ("java.io.File", "canWrite", "*", mm(FileSystem)),
    ("java.io.File", "createTempFile", "*", mm(FileSystem)),
    ("java.nio.channels.FileChannel", "open", "*", mm(FileSystem)),
    // Network
    ("java.net.Socket", "*", "*", mm(Network)),
    ("java.net.ServerSocket", "*", "*", mm(Network)),
    ("java.net.DatagramSocket", "*", "*", mm(Network)),
    ("java.net.URL", "openConnection", "*", mm(Network)),
    ("java.net.URL", "openStream", "*", mm(Network)),
    ("java.net.HttpURLConnection", "*", "*", mm(Network)),
    ("java.net.URLConnection", "connect", "*", mm(Network)),
    ("java.net.URLConnection", "getInputStream", "*", mm(Network)),
    ("java.net.URLConnection", "getOutputStream", "*", mm(Network)),
    ("java.net.http.HttpClient", "send", "*", mm(Network)),
    ("java.net.http.HttpClient", "sendAsync", "*", mm(Network)),
    ("java.net.InetAddress", "getByName", "*", mm(Network)),
    ("java.net.InetAddress", "getLocalHost", "*", mm(Network)),
    ("java.net.InetAddress", "getAllByName", "*", mm(Network)),
    ("java.nio.channels.SocketChannel", "open", "*", mm(Network)),
    ("java.sql.DriverManager", "getConnection", "*", mm(Network)),
    // Threading
    ("java.lang.Thread", "start", "()V", mm(Threading)),
    ("java.lang.Thread", "sleep", "*", mm(Threading)),
    ("java.lang.Thread", "join", "*", mm(Threading)),
    ("java.util.concurrent.ExecutorService", "submit", "*", mm(Threading)),
    ("java.util.concurrent.ExecutorService", "execute", "*", mm(Threading)),
    ("java.util.concurrent.ExecutorService", "invokeAll", "*", mm(Threading)),
    ("java.util.concurrent.ExecutorService", "invokeAny", "*", mm(Threading)),
    ("java.util.concurrent.Executor", "execute", "*", mm(Threading)),
    ("java.util.concurrent.CompletableFuture", "supplyAsync", "*", mm(Threading)),
    ("java.util.concurrent.CompletableFuture", "runAsync", "*", mm(Threading)),
    // ProcessEnv
    ("java.lang.Runtime", "exec", "*", mm(ProcessEnv)),
    ("java.lang.ProcessBuilder", "start", "*", mm(ProcessEnv)),
    ("java.lang.System", "getenv", "*", mm(ProcessEnv)),
    ("java.lang.System", "getProperty", "*", mm(ProcessEnv)),
    ("java.lang.System", "exit", "*", mm(ProcessEnv)),
    // Console
    ("java.lang.System", "console", "*", mm(Console)),
    ("java.io.Console", "*", "*", mm(Console)),
    // OtherNonDeterminism
    ("java.lang.System", "identityHashCode", "*", mm(OtherNonDeterminism)),
    ("java.lang.Runtime", "freeMemory", "*", mm(OtherNonDeterminism)),
    ("java.lang.Runtime", "totalMemory", "*", mm(OtherNonDeterminism)),
    ("java.lang.Runtime", "availableProcessors", "*", mm(OtherNonDeterminism)),
    // Sinks: logging front ends
    ("org.slf4j.Logger", "*", "*", Sink),
    ("java.util.logging.Logger", "*", "*", Sink),
    ("org.apache.log4j.Logger", "*", "*", Sink),
    ("org.apache.log4j.Category", "*", "*", Sink),
    ("org.apache.logging.log4j.Logger", "*", "*", Sink),
    ("org.apache.commons.logging.Log", "*", "*", Sink),
    ("java.lang.System$Logger", "*", "*", Sink),
];
