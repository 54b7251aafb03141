package mail;

public class MailSender {
  private final String host;
  private final int port;

  public MailSender(String host, int port) {
    this.host = host;
    this.port = port;
  }

  public boolean isConnected() {
    return host != null && port > 0;
  }
}
